#include "bandsel/classes.hpp"

namespace bandsel {

std::string_view fruit_name(Fruit f) noexcept { return f == Fruit::Strawberry ? "strawberry" : "tomato"; }

std::optional<Fruit> parse_fruit(std::string_view name) noexcept {
    if (name == "strawberry") return Fruit::Strawberry;
    if (name == "tomato") return Fruit::Tomato;
    return std::nullopt;
}

const std::vector<std::string>& class_names(Fruit f) {
    static const std::vector<std::string> strawberry = {"Green", "White", "Pink", "Late-Pink",
                                                        "Red", "Late-Red", "Overripe"};
    static const std::vector<std::string> tomato = {"Green", "Breaker", "Turning", "Pink", "Light-Red", "Red"};
    return f == Fruit::Strawberry ? strawberry : tomato;
}

std::vector<MaturityClass> maturity_classes(Fruit f) {
    std::vector<MaturityClass> out;
    const auto& names = class_names(f);
    for (std::size_t i = 0; i < names.size(); ++i) out.push_back({f, i, names[i]});
    return out;
}

std::optional<std::size_t> class_index(Fruit f, std::string_view name) noexcept {
    const auto& names = class_names(f);
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return i;
    return std::nullopt;
}

}  // namespace bandsel
