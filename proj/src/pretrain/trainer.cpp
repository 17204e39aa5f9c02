#include "pretrain/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "autodiff/checkpoint.hpp"
#include "autodiff/ops.hpp"
#include "common/error.hpp"
#include "common/parallel.hpp"
#include "model/readtwice.hpp"

namespace readtwice::pretrain {

std::vector<TrainingDocument> make_training_documents(
    const std::vector<corpus::AnnotatedDocument>& docs, const corpus::SegmentationProfile& profile,
    const std::map<std::size_t, std::vector<std::size_t>>& forced) {
  std::vector<TrainingDocument> out;
  out.reserve(docs.size());
  for (std::size_t d = 0; d < docs.size(); ++d) {
    TrainingDocument td;
    td.encoded = pipeline::encode_document(docs[d], profile, 0);
    td.encoded.source = d;
    td.forced.resize(td.encoded.segments.size());
    if (auto it = forced.find(d); it != forced.end()) {
      for (std::size_t pos : it->second) {
        bool placed = false;
        for (std::size_t s = 0; s < td.encoded.segments.size(); ++s) {
          if (auto local = td.encoded.map.to_local(td.encoded.segments[s].window, pos)) {
            td.forced[s].push_back(*local + td.encoded.segments[s].context_offset);
            placed = true;
          }
        }
        if (!placed) fail(ErrorKind::kInvalidArgument, "forced position outside the document");
      }
    }
    out.push_back(std::move(td));
  }
  return out;
}

std::vector<MaskedSegment> mask_batch(std::span<const TrainingDocument* const> docs, Rng& rng,
                                      const MaskingConfig& config, std::size_t vocab_size) {
  std::vector<MaskedSegment> masks;
  for (const TrainingDocument* doc : docs) {
    for (std::size_t s = 0; s < doc->encoded.segments.size(); ++s) {
      const auto& seg = doc->encoded.segments[s];
      masks.push_back(mask_tokens(seg.input.token_ids, seg.input.mentions, seg.context_mask(), rng,
                                  config, vocab_size, doc->forced[s]));
    }
  }
  return masks;
}

LossBreakdown pretrain_loss(ad::Tape& tape, model::Model& model,
                            std::span<const model::SegmentInput> inputs,
                            std::span<const MaskedSegment> masks, const PretrainConfig& config,
                            Rng& rng) {
  if (inputs.size() != masks.size()) fail(ErrorKind::kDimension, "one mask per segment required");
  std::vector<model::SegmentInput> masked(inputs.begin(), inputs.end());
  for (std::size_t i = 0; i < masked.size(); ++i) masked[i].token_ids = masks[i].input_ids;

  model::ForwardResult fwd = model::read_twice(tape, model, masked);
  std::vector<ad::Var> h4;
  for (const auto& s : fwd.segments) h4.push_back(s.h4);

  LossBreakdown out;
  out.mlm = mlm_loss(tape, model, h4, masks);
  out.coref_weight =
      model.config.memory.mode == model::MemoryMode::kEntity ? config.coref_weight : 0.0;
  if (out.coref_weight != 0.0) {
    auto pairs = coref_pairs(fwd.table.entries, config.negatives_per_positive, &rng);
    out.coref = coref_loss(tape, model, fwd.table, pairs);
    out.total = ad::add(out.mlm.loss, ad::scale(out.coref.loss, out.coref_weight));
  } else {
    out.coref.loss = tape.constant(ad::Tensor::scalar(0.0));
    out.total = out.mlm.loss;
  }
  return out;
}

std::vector<std::size_t> select_batch(std::size_t n_docs, std::size_t batch_documents,
                                      std::uint64_t seed, std::uint64_t step) {
  if (n_docs == 0) fail(ErrorKind::kInvalidArgument, "no training documents");
  Rng rng = Rng::derive(seed ^ 0x5bd1e995ULL, step);
  std::vector<std::size_t> order(n_docs);
  for (std::size_t i = 0; i < n_docs; ++i) order[i] = i;
  const std::size_t k = std::min(std::max<std::size_t>(batch_documents, 1), n_docs);
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(order[i], order[i + rng.below(n_docs - i)]);
  }
  order.resize(k);
  return order;
}

StepMetrics pretrain_step(model::Model& model, ad::Adam& adam,
                          std::span<const TrainingDocument* const> batch,
                          const PretrainConfig& config, std::uint64_t step) {
  Rng rng = Rng::derive(config.seed, step);
  std::vector<const pipeline::EncodedDocument*> encoded;
  for (const auto* d : batch) encoded.push_back(&d->encoded);
  auto inputs = pipeline::batch_inputs(encoded);
  auto masks = mask_batch(batch, rng, config.masking, model.config.encoder.vocab_size);

  ad::Tape tape;
  tape.set_rng(&rng);
  LossBreakdown loss = pretrain_loss(tape, model, inputs, masks, config, rng);
  StepMetrics m;
  m.step = step;
  m.total = loss.total.value().item();
  m.mlm = loss.mlm.loss.value().item();
  m.coref = loss.coref.loss.value().item();
  m.masked = loss.mlm.count;
  m.coref_pairs = loss.coref.pairs;
  m.mlm_empty = loss.mlm.empty;
  if (!std::isfinite(m.total)) {
    fail(ErrorKind::kNumeric, "non-finite loss at step " + std::to_string(step));
  }
  model.params.zero_grad();
  tape.backward(loss.total);
  m.learning_rate = adam.current_learning_rate();
  m.grad_norm = adam.step(model.params);
  return m;
}

MlmAccuracy mlm_accuracy(model::Model& model, std::span<const TrainingDocument> docs,
                         const MaskingConfig& masking, std::uint64_t seed, bool forced_only,
                         std::size_t threads) {
  std::vector<std::size_t> hit_all(docs.size()), n_all(docs.size()), hit_ent(docs.size()),
      n_ent(docs.size());
  parallel_for(docs.size(), threads, [&](std::size_t d) {
    const TrainingDocument& doc = docs[d];
    Rng rng = Rng::derive(seed, d);
    std::vector<MaskedSegment> masks;
    std::vector<model::SegmentInput> inputs;
    for (std::size_t s = 0; s < doc.encoded.segments.size(); ++s) {
      const auto& seg = doc.encoded.segments[s];
      masks.push_back(forced_only
                          ? mask_exactly(seg.input.token_ids, seg.input.mentions, doc.forced[s])
                          : mask_tokens(seg.input.token_ids, seg.input.mentions,
                                        seg.context_mask(), rng, masking,
                                        model.config.encoder.vocab_size, doc.forced[s]));
      inputs.push_back(seg.input);
      inputs.back().token_ids = masks.back().input_ids;
    }
    ad::Tape tape;
    model::ForwardResult fwd = model::read_twice(tape, model, inputs);
    std::vector<ad::Var> h4;
    for (const auto& s : fwd.segments) h4.push_back(s.h4);
    MlmResult r = mlm_loss(tape, model, h4, masks);
    if (r.empty) return;
    const ad::Tensor& logits = r.logits->value();
    for (std::size_t i = 0; i < r.count; ++i) {
      std::size_t best = 0;
      for (std::size_t v = 1; v < logits.cols(); ++v) {
        if (logits(i, v) > logits(i, best)) best = v;
      }
      const bool hit = best == r.labels[i];
      ++n_all[d];
      hit_all[d] += hit;
      if (r.entity[i]) {
        ++n_ent[d];
        hit_ent[d] += hit;
      }
    }
  });
  MlmAccuracy acc;
  std::size_t ha = 0, he = 0;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    ha += hit_all[d];
    he += hit_ent[d];
    acc.all_count += n_all[d];
    acc.entity_count += n_ent[d];
  }
  acc.all = acc.all_count ? static_cast<double>(ha) / static_cast<double>(acc.all_count) : 0.0;
  acc.entity =
      acc.entity_count ? static_cast<double>(he) / static_cast<double>(acc.entity_count) : 0.0;
  return acc;
}

void save_training_state(const std::filesystem::path& path, const model::Model& model,
                         const ad::Adam& adam, std::map<std::string, std::string> metadata) {
  ad::Checkpoint ckpt;
  ad::store_params(model.params, ckpt);
  adam.save(ckpt);
  for (auto& [k, v] : metadata) ckpt.metadata[k] = std::move(v);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  ad::write_checkpoint(path, ckpt);
}

std::map<std::string, std::string> load_training_state(const std::filesystem::path& path,
                                                       model::Model& model, ad::Adam* adam) {
  ad::Checkpoint ckpt = ad::read_checkpoint(path);
  ad::Checkpoint params;
  for (const auto& [k, v] : ckpt.tensors) {
    if (k.rfind("optimizer/", 0) != 0) params.tensors.emplace(k, v);
  }
  ad::load_params(model.params, params);
  if (adam) adam->load(ckpt);
  return ckpt.metadata;
}

void run_pretraining(model::Model& model, ad::Adam& adam, std::span<const TrainingDocument> docs,
                     const PretrainConfig& config, const TrainLoopOptions& options,
                     const TrainLoopHooks& hooks) {
  auto checkpoint = [&] {
    if (!options.checkpoint_path.empty()) {
      save_training_state(options.checkpoint_path, model, adam, options.checkpoint_metadata);
    }
  };
  for (std::uint64_t step = adam.steps_taken(); step < options.steps; ++step) {
    auto picked = select_batch(docs.size(), config.batch_documents, config.seed, step);
    std::vector<const TrainingDocument*> batch;
    for (std::size_t i : picked) batch.push_back(&docs[i]);
    StepMetrics m = pretrain_step(model, adam, batch, config, step);
    if (hooks.on_step) hooks.on_step(m);
    const std::uint64_t done = step + 1;
    if (options.eval_every && done % options.eval_every == 0 && done != options.steps &&
        hooks.on_eval) {
      hooks.on_eval(done);
    }
    if (options.checkpoint_every && done % options.checkpoint_every == 0) checkpoint();
  }
  if (hooks.on_eval) hooks.on_eval(adam.steps_taken());
  checkpoint();
}

}  // namespace readtwice::pretrain
