#pragma once

#include <optional>
#include <string_view>

namespace grag::assets {

// Bundled text assets, keyed by their path under assets/ (e.g.
// "prompts/answer_v1.txt").
std::optional<std::string_view> find(std::string_view name);

}  // namespace grag::assets
