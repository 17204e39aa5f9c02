#include "corpus/vocab.hpp"

#include <fstream>

#include "common/error.hpp"

namespace readtwice::corpus {

namespace {

const std::string kSpaceMarker = "\xE2\x96\x81";  // U+2581

std::string decode_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::string out;
  for (std::size_t i = 0; i < line.size();) {
    if (line.compare(i, kSpaceMarker.size(), kSpaceMarker) == 0) {
      out += ' ';
      i += kSpaceMarker.size();
    } else {
      out += line[i++];
    }
  }
  return out;
}

std::string encode_line(const std::string& token) {
  std::string out;
  for (char c : token) {
    if (c == ' ') out += kSpaceMarker;
    else out += c;
  }
  return out;
}

}  // namespace

Vocab::Vocab() {
  for (const char* s : {"[PAD]", "[CLS]", "[SEP]", "[MASK]"}) {
    ids_.emplace(s, surfaces_.size());
    surfaces_.emplace_back(s);
  }
  for (int b = 0; b < 256; ++b) {
    std::string s(1, static_cast<char>(b));
    ids_.emplace(s, surfaces_.size());
    surfaces_.push_back(std::move(s));
  }
}

void Vocab::add(const std::string& surface) {
  if (surface.empty() || ids_.count(surface)) return;
  ids_.emplace(surface, surfaces_.size());
  surfaces_.push_back(surface);
  longest_ = std::max(longest_, surface.size());
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  Vocab v;
  for (const auto& t : tokens) v.add(t);
  return v;
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open vocabulary " + path.string());
  Vocab v;
  std::string line;
  while (std::getline(in, line)) v.add(decode_line(line));
  return v;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write vocabulary " + path.string());
  for (const auto& t : word_tokens()) out << encode_line(t) << '\n';
}

std::vector<std::string> Vocab::word_tokens() const {
  return std::vector<std::string>(surfaces_.begin() + static_cast<std::ptrdiff_t>(kFirstWordId),
                                  surfaces_.end());
}

std::optional<std::size_t> Vocab::find(std::string_view surface) const {
  auto it = ids_.find(std::string(surface));
  if (it == ids_.end() || it->second < kFirstByteId) return std::nullopt;
  return it->second;
}

std::size_t Vocab::id(std::string_view surface) const {
  auto found = find(surface);
  if (!found) fail(ErrorKind::kInvalidArgument, "token '" + std::string(surface) + "' not in vocabulary");
  return *found;
}

const std::string& Vocab::surface(std::size_t id) const {
  if (id >= surfaces_.size()) fail(ErrorKind::kInvalidArgument, "token id out of range");
  return surfaces_[id];
}

std::vector<Token> tokenize(std::string_view text, const Vocab& vocab) {
  std::vector<Token> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t max_len = std::min(vocab.longest_token(), text.size() - pos);
    std::size_t matched = 0, id = 0;
    for (std::size_t len = max_len; len >= 2; --len) {
      if (auto found = vocab.find(text.substr(pos, len))) {
        matched = len;
        id = *found;
        break;
      }
    }
    if (matched == 0) {
      matched = 1;
      id = kFirstByteId + static_cast<unsigned char>(text[pos]);
    }
    out.push_back({id, pos, pos + matched});
    pos += matched;
  }
  return out;
}

std::string detokenize(const std::vector<Token>& tokens, const Vocab& vocab) {
  std::string out;
  for (const Token& t : tokens) out += vocab.surface(t.id);
  return out;
}

std::vector<std::size_t> token_ids(const std::vector<Token>& tokens) {
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const Token& t : tokens) ids.push_back(t.id);
  return ids;
}

}  // namespace readtwice::corpus
