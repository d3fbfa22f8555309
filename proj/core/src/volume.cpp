#include "kneemorph/volume.hpp"

#include <algorithm>
#include <set>
#include <string>

namespace kneemorph {

LabelSchema default_label_schema() {
    return {{1, "femur"}, {2, "tibia"}, {3, "femoral_cartilage"}, {4, "medial_tibial_cartilage"},
            {5, "lateral_tibial_cartilage"}};
}

void validate_labels(const LabelVolume& labels, const LabelSchema& schema) {
    std::set<int> unknown;
    for (auto v : labels.data()) {
        if (v != 0 && !schema.contains(v)) unknown.insert(v);
    }
    if (!unknown.empty()) {
        std::string list;
        for (int v : unknown) list += (list.empty() ? "" : ", ") + std::to_string(v);
        throw InvalidArgument("labels not in schema: " + list);
    }
}

BinaryMask mask_of(const LabelVolume& labels, int label) {
    BinaryMask out(labels.geometry());
    const auto& src = labels.data();
    auto& dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] == label ? 1 : 0;
    return out;
}

std::size_t count_set(const BinaryMask& mask) {
    return static_cast<std::size_t>(std::count_if(mask.data().begin(), mask.data().end(), [](auto v) { return v != 0; }));
}

}  // namespace kneemorph
