#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bandsel {

enum class Fruit { Strawberry, Tomato };

struct MaturityClass {
    Fruit fruit;
    std::size_t index;  // 0-based; class maps store index + 1
    std::string name;
};

std::string_view fruit_name(Fruit f) noexcept;
std::optional<Fruit> parse_fruit(std::string_view name) noexcept;

/// Strawberry: 7 grower-defined stages. Tomato: the 6 USDA color stages.
const std::vector<std::string>& class_names(Fruit f);
std::vector<MaturityClass> maturity_classes(Fruit f);
std::optional<std::size_t> class_index(Fruit f, std::string_view name) noexcept;

}  // namespace bandsel
