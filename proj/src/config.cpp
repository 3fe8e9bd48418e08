#include "bijou/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "bijou/errors.hpp"

namespace bijou {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError("config key '" + std::string(key) + "': expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

std::uint64_t to_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError("config key '" + std::string(key) + "': expected a non-negative integer, got '" +
                      std::string(v) + "'");
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected true/false, got '" + std::string(v) + "'");
}

struct Field {
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, std::string_view key, std::string_view)> set;
};

#define BIJOU_UINT(expr)                                                                        \
  Field {                                                                                      \
    [](const TrainConfig& c) { return std::to_string(c.expr); },                               \
        [](TrainConfig& c, std::string_view k, std::string_view v) { c.expr = to_uint(k, v); } \
  }
#define BIJOU_DOUBLE(expr)                                                                        \
  Field {                                                                                        \
    [](const TrainConfig& c) { return fmt_double(c.expr); },                                     \
        [](TrainConfig& c, std::string_view k, std::string_view v) { c.expr = to_double(k, v); } \
  }
#define BIJOU_BOOL(expr)                                                                        \
  Field {                                                                                      \
    [](const TrainConfig& c) { return std::string(c.expr ? "true" : "false"); },               \
        [](TrainConfig& c, std::string_view k, std::string_view v) { c.expr = to_bool(k, v); } \
  }
#define BIJOU_STRING(expr)                                                                     \
  Field {                                                                                     \
    [](const TrainConfig& c) { return c.expr; },                                              \
        [](TrainConfig& c, std::string_view, std::string_view v) { c.expr = std::string(v); } \
  }

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"preset", BIJOU_STRING(preset)},
      {"modality",
       {[](const TrainConfig& c) { return std::string(to_string(c.model.modality())); },
        [](TrainConfig& c, std::string_view, std::string_view v) { c.model.prenet.modality = parse_modality(v); }}},
      {"seed", BIJOU_UINT(seed)},
      {"encoder.layers", BIJOU_UINT(model.encoder.layers)},
      {"encoder.heads", BIJOU_UINT(model.encoder.heads)},
      {"encoder.d_model",
       {[](const TrainConfig& c) { return std::to_string(c.model.encoder.d_model); },
        [](TrainConfig& c, std::string_view k, std::string_view v) {
          c.model.encoder.d_model = to_uint(k, v);
          c.model.prenet.d_model = c.model.encoder.d_model;
        }}},
      {"encoder.d_ff", BIJOU_UINT(model.encoder.d_ff)},
      {"encoder.layerdrop", BIJOU_DOUBLE(model.encoder.layerdrop)},
      {"encoder.final_norm", BIJOU_BOOL(model.encoder.final_norm)},
      {"prenet.vocab_size", BIJOU_UINT(model.prenet.vocab_size)},
      {"prenet.max_positions", BIJOU_UINT(model.prenet.max_positions)},
      {"prenet.conv_channels", BIJOU_UINT(model.prenet.conv_channels)},
      {"prenet.pos_conv_kernel", BIJOU_UINT(model.prenet.pos_conv_kernel)},
      {"prenet.pos_conv_groups", BIJOU_UINT(model.prenet.pos_conv_groups)},
      {"prenet.standardize_waveform", BIJOU_BOOL(model.prenet.standardize_waveform)},
      {"mask.length", BIJOU_UINT(model.mask.length)},
      {"mask.ratio", BIJOU_DOUBLE(model.mask.ratio)},
      {"mask.adjust", BIJOU_DOUBLE(model.mask.adjust)},
      {"mask.clones", BIJOU_UINT(model.mask.clones)},
      {"distill.top_k", BIJOU_UINT(model.distill.top_k)},
      {"distill.mlm", BIJOU_BOOL(model.distill.mlm)},
      {"decoder.layers", BIJOU_UINT(model.distill.decoder.layers)},
      {"decoder.dim", BIJOU_UINT(model.distill.decoder.dim)},
      {"decoder.groups", BIJOU_UINT(model.distill.decoder.groups)},
      {"decoder.kernel", BIJOU_UINT(model.distill.decoder.kernel)},
      {"ema.start", BIJOU_DOUBLE(model.distill.ema.start)},
      {"ema.end", BIJOU_DOUBLE(model.distill.ema.end)},
      {"ema.anneal_steps", BIJOU_UINT(model.distill.ema.anneal_steps)},
      {"lambda.start", BIJOU_DOUBLE(model.distill.lambda.start)},
      {"lambda.end", BIJOU_DOUBLE(model.distill.lambda.end)},
      {"lambda.steps", BIJOU_UINT(model.distill.lambda.steps)},
      {"optim.lr_min", BIJOU_DOUBLE(optim.lr_min)},
      {"optim.lr_max", BIJOU_DOUBLE(optim.lr_max)},
      {"optim.warmup_steps", BIJOU_UINT(optim.warmup_steps)},
      {"optim.max_steps", BIJOU_UINT(optim.max_steps)},
      {"optim.beta1", BIJOU_DOUBLE(optim.beta1)},
      {"optim.beta2", BIJOU_DOUBLE(optim.beta2)},
      {"optim.eps", BIJOU_DOUBLE(optim.eps)},
      {"optim.weight_decay", BIJOU_DOUBLE(optim.weight_decay)},
      {"optim.clip_norm",
       {[](const TrainConfig& c) { return c.optim.clip_norm ? fmt_double(*c.optim.clip_norm) : std::string("none"); },
        [](TrainConfig& c, std::string_view k, std::string_view v) {
          if (v == "none" || v == "-") {
            c.optim.clip_norm.reset();
          } else {
            c.optim.clip_norm = to_double(k, v);
          }
        }}},
      {"batch.size", BIJOU_UINT(batch_size)},
      {"batch.seconds", BIJOU_DOUBLE(batch_seconds)},
      {"checkpoint.every", BIJOU_UINT(checkpoint_every)},
      {"data.max_length", BIJOU_UINT(max_text_length)},
      {"data.text", BIJOU_STRING(data_text)},
      {"data.tokenizer", BIJOU_STRING(data_tokenizer)},
      {"data.samples", BIJOU_STRING(data_samples)},
      {"data.manifest", BIJOU_STRING(data_manifest)},
      {"out.dir", BIJOU_STRING(out_dir)},
  };
  return table;
}

#undef BIJOU_UINT
#undef BIJOU_DOUBLE
#undef BIJOU_BOOL
#undef BIJOU_STRING

const Field& field(std::string_view key) {
  for (const auto& [k, f] : fields()) {
    if (k == key) return f;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

TrainConfig TrainConfig::from_preset(std::string_view name) {
  TrainConfig c;
  c.preset = std::string(name);
  if (name == "speech-base" || name == "speech-large") {
    const bool large = name == "speech-large";
    c.model.encoder = large ? EncoderConfig::large() : EncoderConfig::base();
    c.model.encoder.layerdrop = large ? 0.0 : 0.05;
    c.model.prenet.modality = Modality::speech;
    c.model.prenet.d_model = c.model.encoder.d_model;
    c.model.mask = large ? MaskSpec::speech_large() : MaskSpec::speech_base();
    c.model.distill = large ? DistillConfig::speech_large() : DistillConfig::speech_base();
    c.optim = large ? OptimConfig::speech_large() : OptimConfig::speech_base();
    c.batch_seconds = large ? 40.0 : 62.5;
    return c;
  }
  if (name == "text-base-mlm") {
    c.model.encoder = EncoderConfig::base();
    c.model.prenet.modality = Modality::text;
    c.model.prenet.d_model = c.model.encoder.d_model;
    c.model.prenet.vocab_size = 50000;
    c.model.prenet.max_positions = 512;
    c.model.mask = MaskSpec::text();
    c.model.distill = DistillConfig::text_base_mlm();
    c.optim = OptimConfig::text_base_mlm();
    c.batch_size = 32;
    return c;
  }
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

std::vector<std::string> TrainConfig::preset_names() { return {"speech-base", "speech-large", "text-base-mlm"}; }

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& [name, _] : fields()) out.push_back(name);
    return out;
  }();
  return k;
}

void TrainConfig::set(std::string_view key, std::string_view value) { field(key).set(*this, key, value); }

std::string TrainConfig::get(std::string_view key) const { return field(key).get(*this); }

TrainConfig TrainConfig::parse(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    kv.emplace_back(trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
  }
  TrainConfig c;
  for (const auto& [k, v] : kv) {
    if (k == "preset" && v != "custom") c = from_preset(v);
  }
  for (const auto& [k, v] : kv) c.set(k, v);
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string TrainConfig::to_text() const {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + " = " + f.get(*this) + "\n";
  return out;
}

void TrainConfig::validate() const {
  model.validate();
  optim.validate();
  if (modality() == Modality::text && batch_size == 0) throw ConfigError("batch.size must be positive");
  if (modality() == Modality::speech && !(batch_seconds > 0.0)) throw ConfigError("batch.seconds must be positive");
  if (max_text_length > model.prenet.max_positions && modality() == Modality::text) {
    throw ConfigError("data.max_length exceeds prenet.max_positions");
  }
}

}  // namespace bijou
