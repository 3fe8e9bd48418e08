#include <doctest.h>

#include <cstring>

#include "bijou/checkpoint.hpp"
#include "bijou/errors.hpp"
#include "support.hpp"

using namespace bijou;

TEST_CASE("container round trip") {
  Rng rng(1);
  Container c;
  stamp(c, "checkpoint");
  c.doc["note"] = "hello world";
  const auto t = testing::randn({3, 4}, rng, 1.0, false);
  c.add("w", t);
  c.add("v", {5}, std::vector<double>{1, 2, 3, 4, 5});
  c.add_bytes("raw", std::string("a\0b", 3));
  c.add("empty", {0}, std::vector<double>{});

  const auto data = c.serialize();
  CHECK(data.substr(0, 8) == "BIJOUCK1");
  const auto back = Container::deserialize(data);
  CHECK(back.doc == c.doc);
  CHECK(back.tensor("w").shape() == Shape{3, 4});
  for (std::size_t i = 0; i < t.numel(); ++i) CHECK(back.tensor("w").at(i) == t.at(i));
  CHECK(back.f64("v") == std::vector<double>{1, 2, 3, 4, 5});
  CHECK(back.bytes("raw") == std::string("a\0b", 3));
  CHECK(back.f64("empty").empty());
  CHECK(back.serialize() == data);
  CHECK_NOTHROW(check_stamp(back, "checkpoint"));

  testing::TempDir dir("ckpt");
  c.save(dir / "x.ckpt");
  CHECK(testing::slurp(dir / "x.ckpt") == data);
  CHECK(Container::load(dir / "x.ckpt").doc == c.doc);

  CHECK_THROWS_AS(back.f64("missing"), DataError);
  CHECK_THROWS_AS(back.value("missing"), DataError);
  CHECK_THROWS_AS(Container::load(dir / "nope.ckpt"), DataError);
}

TEST_CASE("container serialization does not depend on insertion order") {
  Container a, b;
  a.doc["x"] = "1";
  a.doc["y"] = "2";
  b.doc["y"] = "2";
  b.doc["x"] = "1";
  CHECK(a.serialize() == b.serialize());
}

TEST_CASE("corrupt or foreign data is rejected") {
  Container c;
  stamp(c, "checkpoint");
  c.add("w", {2}, std::vector<double>{1, 2});
  auto data = c.serialize();
  CHECK_THROWS_AS(Container::deserialize("NOTACKPT"), DataError);
  CHECK_THROWS_AS(Container::deserialize(data.substr(0, data.size() - 3)), DataError);
  CHECK_THROWS_AS(Container::deserialize(""), DataError);
  auto flipped = data;
  flipped[0] = 'X';
  CHECK_THROWS_AS(Container::deserialize(flipped), DataError);
}

TEST_CASE("version and kind mismatches name what was expected") {
  Container c;
  stamp(c, "checkpoint");
  c.doc["format.version"] = "7";
  try {
    check_stamp(c, "checkpoint");
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find('7') != std::string::npos);
    CHECK(msg.find(std::to_string(kCheckpointVersion)) != std::string::npos);
  }
  Container d;
  stamp(d, "encoder-bundle");
  CHECK_THROWS_AS(check_stamp(d, "checkpoint"), DataError);
  Container e;
  CHECK_THROWS_AS(check_stamp(e, "checkpoint"), DataError);
}
