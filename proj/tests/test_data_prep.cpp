#include <doctest.h>

#include <fstream>

#include "bijou/data_prep.hpp"
#include "bijou/errors.hpp"
#include "bijou/rng.hpp"
#include "support.hpp"

using namespace bijou;

namespace {
std::vector<std::int32_t> run(std::size_t n, std::int32_t start = 0) {
  std::vector<std::int32_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = start + static_cast<std::int32_t>(i % 1000);
  return v;
}
}  // namespace

TEST_CASE("packing examples") {
  const std::vector<std::vector<std::int32_t>> three{run(200), run(200, 1), run(200, 2)};
  const auto packed = pack_text(three);
  REQUIRE(packed.size() == 2);
  CHECK(packed[0].ids.size() == 400);
  CHECK(packed[0].sentence_ends == std::vector<std::size_t>{200, 400});
  CHECK(packed[1].ids.size() == 200);
  CHECK_FALSE(packed[0].truncated);

  const std::vector<std::vector<std::int32_t>> big{run(600)};
  const auto t = pack_text(big);
  REQUIRE(t.size() == 1);
  CHECK(t[0].ids.size() == 512);
  CHECK(t[0].truncated);
  CHECK(t[0].ids == std::vector<std::int32_t>(big[0].begin(), big[0].begin() + 512));

  CHECK(pack_text(std::span<const std::vector<std::int32_t>>{}).empty());
  const std::vector<std::vector<std::int32_t>> blanks{{}, {}, {}};
  CHECK(pack_text(blanks).empty());

  const std::vector<std::vector<std::int32_t>> exact{run(512), run(1)};
  const auto e = pack_text(exact);
  REQUIRE(e.size() == 2);
  CHECK_FALSE(e[0].truncated);
  CHECK_THROWS_AS(pack_text(exact, 0), ConfigError);
}

TEST_CASE("packing preserves order, respects the bound and ends on sentences") {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t max_len = 1 + rng.below(64);
    std::vector<std::vector<std::int32_t>> sents(rng.below(30));
    std::vector<std::int32_t> flat;
    bool any_long = false;
    for (auto& s : sents) {
      s.resize(rng.below(max_len + 8));
      for (auto& x : s) x = static_cast<std::int32_t>(rng.below(1000));
      if (s.size() > max_len) {
        any_long = true;
        flat.insert(flat.end(), s.begin(), s.begin() + static_cast<std::ptrdiff_t>(max_len));
      } else {
        flat.insert(flat.end(), s.begin(), s.end());
      }
    }
    const auto packed = pack_text(sents, max_len);
    std::vector<std::int32_t> joined;
    std::size_t n_sent = 0;
    for (std::size_t k = 0; k < packed.size(); ++k) {
      const auto& p = packed[k];
      CHECK(!p.ids.empty());
      CHECK(p.ids.size() <= max_len);
      CHECK(p.sentence_ends.back() == p.ids.size());
      n_sent += p.sentence_ends.size();
      joined.insert(joined.end(), p.ids.begin(), p.ids.end());
      // Greedy: the next sample's first sentence did not fit here.
      if (k + 1 < packed.size() && !packed[k + 1].truncated && !p.truncated) {
        const std::size_t first = packed[k + 1].sentence_ends.front();
        CHECK(p.ids.size() + first > max_len);
      }
    }
    CHECK(joined == flat);
    std::size_t nonempty = 0;
    for (const auto& s : sents) nonempty += !s.empty();
    CHECK(n_sent == nonempty);
    (void)any_long;
  }
}

TEST_CASE("samples file round trip") {
  testing::TempDir dir("samples");
  const std::vector<std::vector<std::int32_t>> sents{{1, 2, 3}, {4}, {5, 6}, run(20)};
  const auto packed = pack_text(sents, 8);
  write_samples(dir / "s.txt", packed);
  const auto back = read_samples(dir / "s.txt");
  REQUIRE(back.size() == packed.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].ids == packed[i].ids);
    CHECK(back[i].sentence_ends == packed[i].sentence_ends);
    CHECK(back[i].truncated == packed[i].truncated);
  }
  CHECK(testing::slurp(dir / "s.txt").starts_with("bijou-samples v1\n0\t1 2 3 | 4 | 5 6\n"));

  std::ofstream(dir / "bad.txt") << "nope\n";
  CHECK_THROWS_AS(read_samples(dir / "bad.txt"), DataError);
  std::ofstream(dir / "bad2.txt") << "bijou-samples v1\n0\t1 x 3\n";
  CHECK_THROWS_AS(read_samples(dir / "bad2.txt"), DataError);
  CHECK_THROWS_AS(read_samples(dir / "missing.txt"), DataError);
}

TEST_CASE("manifest and line readers") {
  testing::TempDir dir("manifest");
  const std::vector<ManifestEntry> m{{"a.wav", 0.0, 30.0}, {"dir/b c.wav", 12.5, 0.1}};
  write_manifest(dir / "m.tsv", m);
  const auto back = read_manifest(dir / "m.tsv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].path == "dir/b c.wav");
  CHECK(back[1].offset_seconds == 12.5);
  CHECK(back[1].duration_seconds == 0.1);
  std::ofstream(dir / "bad.tsv") << "bijou-manifest v1\nonly-a-path\n";
  CHECK_THROWS_AS(read_manifest(dir / "bad.tsv"), DataError);

  std::ofstream(dir / "lines.txt") << "one\r\n\n   \nTwo words\n";
  CHECK(read_lines(dir / "lines.txt") == std::vector<std::string>{"one", "Two words"});
}
