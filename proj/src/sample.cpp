#include "emovid/sample.hpp"

namespace emovid {

const std::vector<std::string>& class_names() {
    static const std::vector<std::string> names = {
        "anger", "neutral", "sad", "fear", "surprise", "happiness", "disgust",
    };
    return names;
}

int class_index(const std::string& name) {
    const auto& names = class_names();
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == name)
            return static_cast<int>(i);
    return -1;
}

} // namespace emovid
