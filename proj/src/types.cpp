#include "bijou/types.hpp"

#include "bijou/errors.hpp"

namespace bijou {

std::string_view to_string(Modality m) { return m == Modality::text ? "text" : "speech"; }

Modality parse_modality(std::string_view s) {
  if (s == "text") return Modality::text;
  if (s == "speech") return Modality::speech;
  throw ConfigError("unknown modality '" + std::string(s) + "' (expected text or speech)");
}

}  // namespace bijou
