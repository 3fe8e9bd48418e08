#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace bijou::tok {

inline constexpr std::string_view kFileHeader = "bijou-tok v1";
// Marks a piece that follows whitespace (or starts the text).
inline constexpr std::string_view kSpaceMarker = "\xE2\x96\x81";  // U+2581

enum Special : std::int32_t { kPad = 0, kUnk = 1, kCls = 2, kSep = 3, kMask = 4 };
inline constexpr std::size_t kNumSpecials = 5;
inline constexpr std::size_t kDefaultVocabSize = 50000;
// Longest letter run that still binds to a following apostrophe ("quelqu'").
inline constexpr std::size_t kMaxElisionLetters = 6;

/// NFC, apostrophe variants folded to U+0027, whitespace runs collapsed and
/// trimmed. Throws InputError on malformed UTF-8.
std::string normalize(std::string_view text);

/// Splits normalized text into words and punctuation. A letter run of at
/// most six letters followed by an apostrophe and a letter becomes an elision
/// unit that keeps the apostrophe ("c'est" -> "c'", "est").
std::vector<std::string> pretokenize(std::string_view normalized);

struct Piece {
  std::string text;
  bool after_space = false;
};
std::vector<Piece> pretokenize_pieces(std::string_view normalized);

struct TokenSequence {
  std::vector<std::int32_t> ids;
  // Exclusive end offset of every sentence in `ids`.
  std::vector<std::size_t> sentence_ends;
};

struct TrainReport {
  std::size_t base_symbols = 0;
  std::size_t merges = 0;
  // Set when the corpus ran out of pairs before the target size.
  bool undersized = false;
};

class Tokenizer {
 public:
  Tokenizer() = default;
  Tokenizer(std::vector<std::string> vocab, std::vector<std::pair<std::string, std::string>> merges);

  static Tokenizer train(std::span<const std::string> corpus, std::size_t target_vocab,
                         TrainReport* report = nullptr);

  TokenSequence encode(std::string_view text) const;
  // One sentence per element; the result records every sentence end.
  TokenSequence encode_sentences(std::span<const std::string> sentences) const;
  std::string decode(std::span<const std::int32_t> ids) const;

  std::size_t vocab_size() const { return vocab_.size(); }
  const std::vector<std::string>& vocab() const { return vocab_; }
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
  // kUnk when absent.
  std::int32_t id_of(const std::string& token) const;

  void save(const std::filesystem::path& dir) const;
  static Tokenizer load(const std::filesystem::path& dir);

 private:
  std::vector<std::int32_t> encode_piece(const Piece& piece) const;

  std::vector<std::string> vocab_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::unordered_map<std::string, std::int32_t> ids_;
  std::map<std::pair<std::string, std::string>, std::size_t> merge_rank_;
};

// Code-point split of a UTF-8 string; throws InputError on malformed input.
std::vector<std::string> utf8_chars(std::string_view s);

}  // namespace bijou::tok
