#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace readtwice::corpus {

inline constexpr std::size_t kPadId = 0;
inline constexpr std::size_t kClsId = 1;
inline constexpr std::size_t kSepId = 2;
inline constexpr std::size_t kMaskId = 3;
inline constexpr std::size_t kFirstByteId = 4;
inline constexpr std::size_t kFirstWordId = kFirstByteId + 256;

// Id layout: four specials, then the 256 single-byte fallback tokens, then the
// vocabulary file's tokens in file (rank) order.
//
// Vocabulary file: UTF-8, one token per line. U+2581 ("▁") stands for a space
// so tokens can carry a leading blank. Lines naming a special token or an
// already-present token are ignored.
class Vocab {
 public:
  Vocab();
  static Vocab from_tokens(const std::vector<std::string>& tokens);
  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return surfaces_.size(); }
  std::optional<std::size_t> find(std::string_view surface) const;
  std::size_t id(std::string_view surface) const;  // throws if absent
  const std::string& surface(std::size_t id) const;
  bool is_special(std::size_t id) const { return id < kFirstByteId; }
  std::size_t longest_token() const { return longest_; }
  std::vector<std::string> word_tokens() const;

 private:
  void add(const std::string& surface);

  std::vector<std::string> surfaces_;
  std::unordered_map<std::string, std::size_t> ids_;
  std::size_t longest_ = 1;
};

struct Token {
  std::size_t id = 0;
  std::size_t begin = 0;  // byte offsets into the source text
  std::size_t end = 0;
};

// Greedy longest-match over raw bytes; any byte no vocabulary token covers
// becomes its byte token, so every input is representable and the token
// surfaces concatenate back to the input.
std::vector<Token> tokenize(std::string_view text, const Vocab& vocab);
std::string detokenize(const std::vector<Token>& tokens, const Vocab& vocab);
std::vector<std::size_t> token_ids(const std::vector<Token>& tokens);

}  // namespace readtwice::corpus
