#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bijou/parameters.hpp"

namespace bijou {

inline constexpr std::string_view kCheckpointMagic = "BIJOUCK1";
inline constexpr int kCheckpointVersion = 1;

enum class DType : std::uint8_t { f64 = 1, u8 = 2 };

struct ArrayEntry {
  std::string name;
  DType dtype = DType::f64;
  Shape shape;
  std::vector<unsigned char> bytes;
};

/// Little-endian container: magic, length-prefixed key = value document,
/// array table (name, dtype, shape, offset, size), raw array bytes.
class Container {
 public:
  // Ordered so the serialized document does not depend on insertion order.
  std::map<std::string, std::string> doc;

  void add(const std::string& name, const Tensor& t);
  void add(const std::string& name, Shape shape, std::span<const double> values);
  void add_bytes(const std::string& name, std::string_view bytes);

  bool contains(const std::string& name) const;
  const ArrayEntry& entry(const std::string& name) const;
  std::vector<double> f64(const std::string& name) const;
  std::string bytes(const std::string& name) const;
  Tensor tensor(const std::string& name) const;
  const std::vector<ArrayEntry>& arrays() const { return arrays_; }

  const std::string& value(const std::string& key) const;

  std::string serialize() const;
  static Container deserialize(std::string_view data);
  void save(const std::filesystem::path& path) const;
  static Container load(const std::filesystem::path& path);

 private:
  std::vector<ArrayEntry> arrays_;
};

// Writes `kind` and `format.version` into the document.
void stamp(Container& c, std::string_view kind);
// Throws DataError naming both versions on mismatch, or on the wrong kind.
void check_stamp(const Container& c, std::string_view kind);

}  // namespace bijou
