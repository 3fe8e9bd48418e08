#include "bijou/tokenizer.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <tuple>

#include "bijou/errors.hpp"

namespace bijou::tok {

namespace {

const char* const kSpecialTokens[kNumSpecials] = {"<pad>", "<unk>", "<cls>", "<sep>", "<mask>"};

std::vector<char32_t> decode_utf8(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  auto bad = [&] { throw InputError("invalid UTF-8 at byte " + std::to_string(i)); };
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    std::size_t len;
    char32_t cp;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    } else {
      bad();
    }
    if (i + len > s.size()) bad();
    for (std::size_t j = 1; j < len; ++j) {
      const auto b = static_cast<unsigned char>(s[i + j]);
      if ((b & 0xC0) != 0x80) bad();
      cp = (cp << 6) | (b & 0x3F);
    }
    static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) bad();
    out.push_back(cp);
    i += len;
  }
  return out;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

bool is_space(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v' ||
         c == 0x00A0 || (c >= 0x2000 && c <= 0x200A) || c == 0x202F || c == 0x205F ||
         c == 0x3000 || c == 0x1680 || c == 0x2028 || c == 0x2029;
}

bool is_letter(char32_t c) { return u_isalpha(static_cast<UChar32>(c)); }

bool is_word_char(char32_t c) {
  const auto t = u_charType(static_cast<UChar32>(c));
  return u_isalnum(static_cast<UChar32>(c)) || t == U_NON_SPACING_MARK ||
         t == U_COMBINING_SPACING_MARK || t == U_ENCLOSING_MARK;
}

std::string nfc(std::string_view s) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw InputError("NFC normalizer unavailable");
  icu::UnicodeString in = icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
  icu::UnicodeString out = norm->normalize(in, status);
  if (U_FAILURE(status)) throw InputError("NFC normalization failed");
  std::string result;
  out.toUTF8String(result);
  return result;
}

}  // namespace

std::vector<std::string> utf8_chars(std::string_view s) {
  std::vector<std::string> out;
  for (char32_t cp : decode_utf8(s)) {
    std::string c;
    append_utf8(c, cp);
    out.push_back(std::move(c));
  }
  return out;
}

std::string normalize(std::string_view text) {
  decode_utf8(text);  // validation before handing bytes to ICU
  const auto cps = decode_utf8(nfc(text));
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (std::size_t i = 0; i < cps.size(); ++i) {
    char32_t c = cps[i];
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (c == 0x2019 || c == 0x02BC || c == 0xFF07) {
      c = U'\'';
    } else if (c == U'`' && i > 0 && i + 1 < cps.size() && is_letter(cps[i - 1]) &&
               is_letter(cps[i + 1])) {
      c = U'\'';
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    append_utf8(out, c);
  }
  return out;
}

std::vector<Piece> pretokenize_pieces(std::string_view normalized) {
  const auto cps = decode_utf8(normalized);
  std::vector<Piece> out;
  std::string run;
  std::size_t run_letters = 0;  // code points in `run`, all letters so far
  bool run_all_letters = true;
  bool run_after_space = true;
  bool next_after_space = true;

  auto flush = [&] {
    if (!run.empty()) out.push_back({run, run_after_space});
    run.clear();
    run_letters = 0;
    run_all_letters = true;
  };

  for (std::size_t i = 0; i < cps.size(); ++i) {
    const char32_t c = cps[i];
    if (is_space(c)) {
      flush();
      next_after_space = true;
      continue;
    }
    if (is_word_char(c)) {
      if (run.empty()) {
        run_after_space = next_after_space;
        next_after_space = false;
      }
      append_utf8(run, c);
      ++run_letters;
      run_all_letters = run_all_letters && is_letter(c);
      continue;
    }
    if (c == U'\'' && !run.empty() && run_all_letters && run_letters <= kMaxElisionLetters &&
        i + 1 < cps.size() && is_letter(cps[i + 1])) {
      run.push_back('\'');
      flush();
      continue;
    }
    flush();
    std::string p;
    append_utf8(p, c);
    out.push_back({std::move(p), next_after_space});
    next_after_space = false;
  }
  flush();
  return out;
}

std::vector<std::string> pretokenize(std::string_view normalized) {
  std::vector<std::string> out;
  for (auto& p : pretokenize_pieces(normalized)) out.push_back(std::move(p.text));
  return out;
}

Tokenizer::Tokenizer(std::vector<std::string> vocab,
                     std::vector<std::pair<std::string, std::string>> merges)
    : vocab_(std::move(vocab)), merges_(std::move(merges)) {
  if (vocab_.size() < kNumSpecials) throw DataError("vocabulary lacks special tokens");
  for (std::size_t i = 0; i < kNumSpecials; ++i) {
    if (vocab_[i] != kSpecialTokens[i]) throw DataError("special token mismatch at id " + std::to_string(i));
  }
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (!ids_.emplace(vocab_[i], static_cast<std::int32_t>(i)).second) {
      throw DataError("duplicate vocabulary entry: " + vocab_[i]);
    }
  }
  for (std::size_t r = 0; r < merges_.size(); ++r) {
    const auto& [l, rt] = merges_[r];
    if (!ids_.count(l + rt)) throw DataError("merge output missing from vocabulary: " + l + rt);
    merge_rank_.emplace(merges_[r], r);
  }
}

namespace {

// Symbols of one distinct word during training.
struct TrainWord {
  std::vector<int> syms;
  long long freq = 0;
};

std::uint64_t pair_key(int l, int r) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(l)) << 32) |
         static_cast<std::uint32_t>(r);
}

}  // namespace

Tokenizer Tokenizer::train(std::span<const std::string> corpus, std::size_t target_vocab,
                           TrainReport* report) {
  if (corpus.empty()) throw ConfigError("tokenizer training corpus is empty");

  // Distinct pre-tokens with their frequencies, as symbol sequences.
  std::map<std::vector<std::string>, long long> counts;
  for (const auto& line : corpus) {
    for (const auto& piece : pretokenize_pieces(normalize(line))) {
      std::vector<std::string> syms;
      if (piece.after_space) syms.emplace_back(kSpaceMarker);
      for (auto& c : utf8_chars(piece.text)) syms.push_back(std::move(c));
      ++counts[syms];
    }
  }
  if (counts.empty()) throw ConfigError("tokenizer training corpus has no tokens");

  std::set<std::string> base;
  for (const auto& [syms, _] : counts) base.insert(syms.begin(), syms.end());
  if (target_vocab <= base.size() + kNumSpecials) {
    throw ConfigError("target vocabulary " + std::to_string(target_vocab) +
                      " does not exceed base symbols + specials (" +
                      std::to_string(base.size() + kNumSpecials) + ")");
  }

  std::vector<std::string> vocab(kSpecialTokens, kSpecialTokens + kNumSpecials);
  std::vector<std::string> sym_str(base.begin(), base.end());
  std::unordered_map<std::string, int> sym_id;
  for (std::size_t i = 0; i < sym_str.size(); ++i) sym_id[sym_str[i]] = static_cast<int>(i);
  std::set<std::string> in_vocab(base.begin(), base.end());
  vocab.insert(vocab.end(), sym_str.begin(), sym_str.end());

  std::vector<TrainWord> words;
  for (const auto& [syms, freq] : counts) {
    TrainWord w;
    w.freq = freq;
    for (const auto& s : syms) w.syms.push_back(sym_id.at(s));
    words.push_back(std::move(w));
  }

  // Highest count first; ties by merged string, then by the pair itself.
  using Entry = std::tuple<long long, std::string, std::string, std::string>;
  std::set<Entry> queue;
  std::unordered_map<std::uint64_t, long long> pair_count;
  std::unordered_map<std::uint64_t, std::set<std::size_t>> pair_words;

  auto entry_of = [&](std::uint64_t key, long long count) {
    const int l = static_cast<int>(key >> 32), r = static_cast<int>(key & 0xFFFFFFFFu);
    return Entry{-count, sym_str[l] + sym_str[r], sym_str[l], sym_str[r]};
  };
  auto bump = [&](std::uint64_t key, long long delta, std::size_t word) {
    auto& c = pair_count[key];
    if (c > 0) queue.erase(entry_of(key, c));
    c += delta;
    if (c > 0) queue.insert(entry_of(key, c));
    if (delta > 0) pair_words[key].insert(word);
  };
  auto add_word = [&](std::size_t wi, long long sign) {
    const auto& w = words[wi];
    for (std::size_t i = 0; i + 1 < w.syms.size(); ++i) {
      bump(pair_key(w.syms[i], w.syms[i + 1]), sign * w.freq, wi);
    }
  };
  for (std::size_t wi = 0; wi < words.size(); ++wi) add_word(wi, +1);

  std::vector<std::pair<std::string, std::string>> merges;
  while (vocab.size() < target_vocab && !queue.empty()) {
    const auto [negc, merged, ls, rs] = *queue.begin();
    const int l = sym_id.at(ls), r = sym_id.at(rs);
    const auto key = pair_key(l, r);
    int m;
    if (auto it = sym_id.find(merged); it != sym_id.end()) {
      m = it->second;
    } else {
      m = static_cast<int>(sym_str.size());
      sym_str.push_back(merged);
      sym_id.emplace(merged, m);
    }
    merges.emplace_back(ls, rs);
    if (in_vocab.insert(merged).second) vocab.push_back(merged);

    const auto affected = pair_words[key];
    for (std::size_t wi : affected) {
      add_word(wi, -1);
      auto& syms = words[wi].syms;
      std::vector<int> next;
      next.reserve(syms.size());
      for (std::size_t i = 0; i < syms.size(); ++i) {
        if (i + 1 < syms.size() && syms[i] == l && syms[i + 1] == r) {
          next.push_back(m);
          ++i;
        } else {
          next.push_back(syms[i]);
        }
      }
      syms = std::move(next);
      add_word(wi, +1);
    }
    pair_words.erase(key);
  }

  if (report) {
    report->base_symbols = base.size();
    report->merges = merges.size();
    report->undersized = vocab.size() < target_vocab;
  }
  return Tokenizer(std::move(vocab), std::move(merges));
}

std::int32_t Tokenizer::id_of(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

std::vector<std::int32_t> Tokenizer::encode_piece(const Piece& piece) const {
  std::vector<std::string> syms;
  if (piece.after_space) syms.emplace_back(kSpaceMarker);
  for (auto& c : utf8_chars(piece.text)) syms.push_back(std::move(c));

  while (syms.size() > 1) {
    std::size_t best_rank = merge_rank_.size();
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = merge_rank_.find({syms[i], syms[i + 1]});
      if (it != merge_rank_.end()) best_rank = std::min(best_rank, it->second);
    }
    if (best_rank == merge_rank_.size()) break;
    const auto& [l, r] = merges_[best_rank];
    std::vector<std::string> next;
    next.reserve(syms.size());
    for (std::size_t i = 0; i < syms.size(); ++i) {
      if (i + 1 < syms.size() && syms[i] == l && syms[i + 1] == r) {
        next.push_back(l + r);
        ++i;
      } else {
        next.push_back(std::move(syms[i]));
      }
    }
    syms = std::move(next);
  }
  std::vector<std::int32_t> ids;
  ids.reserve(syms.size());
  for (const auto& s : syms) ids.push_back(id_of(s));
  return ids;
}

TokenSequence Tokenizer::encode(std::string_view text) const {
  TokenSequence seq;
  for (const auto& piece : pretokenize_pieces(normalize(text))) {
    const auto ids = encode_piece(piece);
    seq.ids.insert(seq.ids.end(), ids.begin(), ids.end());
  }
  if (!seq.ids.empty()) seq.sentence_ends.push_back(seq.ids.size());
  return seq;
}

TokenSequence Tokenizer::encode_sentences(std::span<const std::string> sentences) const {
  TokenSequence seq;
  for (const auto& s : sentences) {
    auto one = encode(s);
    if (one.ids.empty()) continue;
    seq.ids.insert(seq.ids.end(), one.ids.begin(), one.ids.end());
    seq.sentence_ends.push_back(seq.ids.size());
  }
  return seq;
}

std::string Tokenizer::decode(std::span<const std::int32_t> ids) const {
  std::string joined;
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) {
      throw InputError("token id " + std::to_string(id) + " out of range");
    }
    if (static_cast<std::size_t>(id) < kNumSpecials && id != kUnk) continue;
    joined += vocab_[static_cast<std::size_t>(id)];
  }
  std::string out;
  std::size_t pos = 0;
  while (pos < joined.size()) {
    if (joined.compare(pos, kSpaceMarker.size(), kSpaceMarker) == 0) {
      if (!out.empty()) out.push_back(' ');
      pos += kSpaceMarker.size();
    } else {
      out.push_back(joined[pos++]);
    }
  }
  return out;
}

void Tokenizer::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream v(dir / "vocab.txt", std::ios::binary);
  std::ofstream m(dir / "merges.txt", std::ios::binary);
  if (!v || !m) throw DataError("cannot write tokenizer files under " + dir.string());
  v << kFileHeader << '\n';
  for (const auto& t : vocab_) v << t << '\n';
  m << kFileHeader << '\n';
  for (const auto& [l, r] : merges_) m << l << ' ' << r << '\n';
}

Tokenizer Tokenizer::load(const std::filesystem::path& dir) {
  auto read_lines = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot read " + p.string());
    std::vector<std::string> lines;
    std::string line;
    if (!std::getline(in, line) || line != kFileHeader) {
      throw DataError(p.string() + ": expected header '" + std::string(kFileHeader) + "'");
    }
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
  };
  auto vocab = read_lines(dir / "vocab.txt");
  std::vector<std::pair<std::string, std::string>> merges;
  for (const auto& line : read_lines(dir / "merges.txt")) {
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw DataError("malformed merge line: " + line);
    merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  return Tokenizer(std::move(vocab), std::move(merges));
}

}  // namespace bijou::tok
