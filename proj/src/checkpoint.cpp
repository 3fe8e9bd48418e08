#include "bijou/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "bijou/errors.hpp"

namespace bijou {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view d) : d_(d) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, d_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = d_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  std::size_t size() const { return d_.size(); }

 private:
  void need(std::size_t n) const {
    if (d_.size() - pos_ < n) throw DataError("checkpoint truncated");
  }
  std::string_view d_;
  std::size_t pos_ = 0;
};

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f64:
      return 8;
    case DType::u8:
      return 1;
  }
  throw DataError("checkpoint: unknown dtype tag");
}

}  // namespace

void Container::add(const std::string& name, const Tensor& t) { add(name, t.shape(), t.data()); }

void Container::add(const std::string& name, Shape shape, std::span<const double> values) {
  if (contains(name)) throw ContractError("duplicate checkpoint array " + name);
  if (shape_numel(shape) != values.size()) throw DimensionError("checkpoint array " + name + ": shape/data mismatch");
  ArrayEntry e{name, DType::f64, std::move(shape), {}};
  e.bytes.resize(values.size() * sizeof(double));
  if (!values.empty()) std::memcpy(e.bytes.data(), values.data(), e.bytes.size());
  arrays_.push_back(std::move(e));
}

void Container::add_bytes(const std::string& name, std::string_view bytes) {
  if (contains(name)) throw ContractError("duplicate checkpoint array " + name);
  ArrayEntry e{name, DType::u8, {bytes.size()}, std::vector<unsigned char>(bytes.begin(), bytes.end())};
  arrays_.push_back(std::move(e));
}

bool Container::contains(const std::string& name) const {
  for (const auto& a : arrays_) {
    if (a.name == name) return true;
  }
  return false;
}

const ArrayEntry& Container::entry(const std::string& name) const {
  for (const auto& a : arrays_) {
    if (a.name == name) return a;
  }
  throw DataError("checkpoint has no array '" + name + "'");
}

std::vector<double> Container::f64(const std::string& name) const {
  const auto& e = entry(name);
  if (e.dtype != DType::f64) throw DataError("checkpoint array '" + name + "' is not f64");
  std::vector<double> out(e.bytes.size() / sizeof(double));
  if (!out.empty()) std::memcpy(out.data(), e.bytes.data(), e.bytes.size());
  return out;
}

std::string Container::bytes(const std::string& name) const {
  const auto& e = entry(name);
  return std::string(e.bytes.begin(), e.bytes.end());
}

Tensor Container::tensor(const std::string& name) const { return Tensor::from(entry(name).shape, f64(name)); }

const std::string& Container::value(const std::string& key) const {
  auto it = doc.find(key);
  if (it == doc.end()) throw DataError("checkpoint document lacks '" + key + "'");
  return it->second;
}

std::string Container::serialize() const {
  std::string text;
  for (const auto& [k, v] : doc) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ContractError("checkpoint document entry not representable: " + k);
    }
    text += k + " = " + v + "\n";
  }
  std::string out(kCheckpointMagic);
  put<std::uint64_t>(out, text.size());
  out += text;
  put<std::uint64_t>(out, arrays_.size());
  std::uint64_t offset = 0;
  for (const auto& a : arrays_) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out += a.name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(a.dtype));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) put<std::uint64_t>(out, d);
    put<std::uint64_t>(out, offset);
    put<std::uint64_t>(out, a.bytes.size());
    offset += a.bytes.size();
  }
  for (const auto& a : arrays_) out.append(reinterpret_cast<const char*>(a.bytes.data()), a.bytes.size());
  return out;
}

Container Container::deserialize(std::string_view data) {
  Reader r(data);
  if (r.take(kCheckpointMagic.size()) != kCheckpointMagic) throw DataError("not a bijou checkpoint (bad magic)");
  Container c;
  const auto doc_len = r.get<std::uint64_t>();
  std::istringstream doc{std::string(r.take(doc_len))};
  std::string line;
  while (std::getline(doc, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw DataError("checkpoint document malformed");
    c.doc[line.substr(0, eq)] = line.substr(eq + 3);
  }
  const auto n = r.get<std::uint64_t>();
  struct Pending {
    ArrayEntry e;
    std::uint64_t offset, size;
  };
  std::vector<Pending> pending;
  for (std::uint64_t i = 0; i < n; ++i) {
    Pending p;
    const auto name_len = r.get<std::uint32_t>();
    p.e.name = std::string(r.take(name_len));
    p.e.dtype = static_cast<DType>(r.get<std::uint8_t>());
    const auto rank = r.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < rank; ++k) p.e.shape.push_back(r.get<std::uint64_t>());
    p.offset = r.get<std::uint64_t>();
    p.size = r.get<std::uint64_t>();
    if (p.size != shape_numel(p.e.shape) * dtype_size(p.e.dtype)) {
      throw DataError("checkpoint array '" + p.e.name + "' size does not match its shape");
    }
    pending.push_back(std::move(p));
  }
  const std::size_t base = r.pos();
  for (auto& p : pending) {
    if (p.offset > data.size() - base || p.size > data.size() - base - p.offset) {
      throw DataError("checkpoint truncated in array '" + p.e.name + "'");
    }
    const auto* src = reinterpret_cast<const unsigned char*>(data.data() + base + p.offset);
    p.e.bytes.assign(src, src + p.size);
    c.arrays_.push_back(std::move(p.e));
  }
  return c;
}

void Container::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto bytes = serialize();
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Container Container::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

void stamp(Container& c, std::string_view kind) {
  c.doc["kind"] = std::string(kind);
  c.doc["format.version"] = std::to_string(kCheckpointVersion);
}

void check_stamp(const Container& c, std::string_view kind) {
  const auto& v = c.value("format.version");
  if (v != std::to_string(kCheckpointVersion)) {
    throw DataError("checkpoint format version " + v + " is not supported (this build reads version " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  if (c.value("kind") != kind) {
    throw DataError("expected a " + std::string(kind) + " file, found " + c.value("kind"));
  }
}

}  // namespace bijou
