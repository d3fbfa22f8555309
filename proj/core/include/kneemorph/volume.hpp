#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "kneemorph/error.hpp"
#include "kneemorph/geometry.hpp"

namespace kneemorph {

/// Dense 3D grid of values with physical geometry.
template <typename T>
class Volume {
public:
    using value_type = T;

    Volume() = default;
    explicit Volume(Geometry geometry, T fill = T{})
        : geometry_(std::move(geometry)), data_(geometry_.voxel_count(), fill) {}
    Volume(Geometry geometry, std::vector<T> data) : geometry_(std::move(geometry)), data_(std::move(data)) {
        if (data_.size() != geometry_.voxel_count()) {
            throw InvalidArgument("volume data size does not match geometry dims");
        }
    }

    [[nodiscard]] const Geometry& geometry() const { return geometry_; }
    [[nodiscard]] const Index3& dims() const { return geometry_.dims; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }

    [[nodiscard]] T& operator[](std::size_t idx) { return data_[idx]; }
    [[nodiscard]] const T& operator[](std::size_t idx) const { return data_[idx]; }
    [[nodiscard]] T& at(int i, int j, int k) { return data_[static_cast<std::size_t>(geometry_.linear(i, j, k))]; }
    [[nodiscard]] const T& at(int i, int j, int k) const {
        return data_[static_cast<std::size_t>(geometry_.linear(i, j, k))];
    }

    [[nodiscard]] std::vector<T>& data() { return data_; }
    [[nodiscard]] const std::vector<T>& data() const { return data_; }

    friend bool operator==(const Volume& a, const Volume& b) {
        return same_grid(a.geometry_, b.geometry_, 0.0) && a.data_ == b.data_;
    }

private:
    Geometry geometry_;
    std::vector<T> data_;
};

using LabelVolume = Volume<std::uint16_t>;
using BinaryMask = Volume<std::uint8_t>;
using ScalarVolume = Volume<float>;

/// Map from label value to tissue name; 0 is always background.
using LabelSchema = std::map<int, std::string>;

/// femur, tibia, femoral cartilage, medial and lateral tibial cartilage.
[[nodiscard]] LabelSchema default_label_schema();

/// Throws InvalidArgument if a voxel carries a label missing from `schema`.
void validate_labels(const LabelVolume& labels, const LabelSchema& schema);

[[nodiscard]] BinaryMask mask_of(const LabelVolume& labels, int label);
[[nodiscard]] std::size_t count_set(const BinaryMask& mask);

}  // namespace kneemorph
