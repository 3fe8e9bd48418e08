#include "bijou/data_prep.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "bijou/errors.hpp"

namespace bijou {

std::vector<TextSample> pack_text(std::span<const std::vector<std::int32_t>> sentences, std::size_t max_len) {
  if (max_len == 0) throw ConfigError("pack_text: max_len must be positive");
  std::vector<TextSample> out;
  TextSample cur;
  auto emit = [&] {
    if (!cur.ids.empty()) out.push_back(std::move(cur));
    cur = TextSample{};
  };
  for (const auto& s : sentences) {
    if (s.empty()) continue;
    if (s.size() > max_len) {
      emit();
      cur.ids.assign(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(max_len));
      cur.sentence_ends.push_back(max_len);
      cur.truncated = true;
      emit();
      continue;
    }
    if (cur.ids.size() + s.size() > max_len) emit();
    cur.ids.insert(cur.ids.end(), s.begin(), s.end());
    cur.sentence_ends.push_back(cur.ids.size());
  }
  emit();
  return out;
}

std::vector<TextSample> pack_text(std::span<const std::string> lines, const tok::Tokenizer& tokenizer,
                                  std::size_t max_len) {
  std::vector<std::vector<std::int32_t>> sentences;
  sentences.reserve(lines.size());
  for (const auto& line : lines) sentences.push_back(tokenizer.encode(line).ids);
  return pack_text(sentences, max_len);
}

void write_samples(const std::filesystem::path& path, std::span<const TextSample> samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << kSamplesHeader << '\n';
  for (const auto& s : samples) {
    out << (s.truncated ? 1 : 0) << '\t';
    std::size_t start = 0;
    for (std::size_t k = 0; k < s.sentence_ends.size(); ++k) {
      if (k) out << " |";
      for (std::size_t i = start; i < s.sentence_ends[k]; ++i) out << (i == start && k == 0 ? "" : " ") << s.ids[i];
      start = s.sentence_ends[k];
    }
    out << '\n';
  }
}

std::vector<TextSample> read_samples(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kSamplesHeader) {
    throw DataError(path.string() + ": expected header '" + std::string(kSamplesHeader) + "'");
  }
  std::vector<TextSample> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError(path.string() + ":" + std::to_string(lineno) + ": missing tab");
    TextSample s;
    s.truncated = line.substr(0, tab) == "1";
    std::istringstream fields(line.substr(tab + 1));
    std::string tok;
    while (fields >> tok) {
      if (tok == "|") {
        s.sentence_ends.push_back(s.ids.size());
        continue;
      }
      std::int32_t id = 0;
      auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), id);
      if (ec != std::errc{} || p != tok.data() + tok.size()) {
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad token id '" + tok + "'");
      }
      s.ids.push_back(id);
    }
    if (s.ids.empty()) continue;
    s.sentence_ends.push_back(s.ids.size());
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(std::move(line));
  }
  return lines;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read manifest " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader) {
    throw DataError(path.string() + ": expected header '" + std::string(kManifestHeader) + "'");
  }
  std::vector<ManifestEntry> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected path<TAB>offset<TAB>duration");
    }
    ManifestEntry e;
    e.path = line.substr(0, t1);
    try {
      e.offset_seconds = std::stod(line.substr(t1 + 1, t2 - t1 - 1));
      e.duration_seconds = std::stod(line.substr(t2 + 1));
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed number");
    }
    out.push_back(std::move(e));
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest " + path.string());
  auto num = [](double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
  };
  out << kManifestHeader << '\n';
  for (const auto& e : entries) {
    out << e.path << '\t' << num(e.offset_seconds) << '\t' << num(e.duration_seconds) << '\n';
  }
}

}  // namespace bijou
