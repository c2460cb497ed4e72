#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "preln/model.hpp"

namespace preln {

// Initializer plus embedding treatment, under a short name.
struct SchemeSpec {
  std::string name = "vanilla";
  Initializer init = Initializer::MegatronSmall;
  EmbedMode embed;

  bool operator==(const SchemeSpec&) const = default;
};

// vanilla, embed-detach, embed-ln, scaled-embed, xavier, xavier-scaled
const std::vector<std::string>& builtin_scheme_names();
std::optional<SchemeSpec> builtin_scheme(std::string_view name);
SchemeSpec scheme_by_name(std::string_view name);  // throws std::invalid_argument

inline ModelConfig with_scheme(ModelConfig config, const SchemeSpec& scheme) {
  config.embed_mode = scheme.embed;
  return config;
}

}  // namespace preln
