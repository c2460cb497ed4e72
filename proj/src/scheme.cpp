#include "preln/scheme.hpp"

#include <stdexcept>

namespace preln {

const std::vector<std::string>& builtin_scheme_names() {
  static const std::vector<std::string> names = {"vanilla",      "embed-detach", "embed-ln",
                                                 "scaled-embed", "xavier",       "xavier-scaled"};
  return names;
}

std::optional<SchemeSpec> builtin_scheme(std::string_view name) {
  SchemeSpec s;
  s.name = std::string(name);
  if (name == "vanilla") {
    s.embed = EmbedMode::vanilla();
  } else if (name == "embed-detach") {
    s.embed = EmbedMode::detach();
  } else if (name == "embed-ln") {
    s.embed = EmbedMode::layer_norm();
  } else if (name == "scaled-embed") {
    s.embed = EmbedMode::scaled();
  } else if (name == "xavier") {
    s.init = Initializer::Xavier;
    s.embed = EmbedMode::vanilla();
  } else if (name == "xavier-scaled") {
    s.init = Initializer::Xavier;
    s.embed = EmbedMode::scaled();
  } else {
    return std::nullopt;
  }
  return s;
}

SchemeSpec scheme_by_name(std::string_view name) {
  if (auto s = builtin_scheme(name)) return *s;
  throw std::invalid_argument("unknown scheme '" + std::string(name) + "'");
}

}  // namespace preln
