#pragma once

#include <cstdint>
#include <vector>

#include "arrayem/tensor.hpp"

namespace arrayem {

/// Per-cell observed flag. Observed cells (in canonical order) form the selector R, the rest M.
class ObservationMask {
public:
    ObservationMask() = default;
    ObservationMask(Shape shape, std::vector<std::uint8_t> observed);

    static ObservationMask all_observed(const Shape& shape);
    static ObservationMask all_missing(const Shape& shape);

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] bool observed(Index offset) const { return observed_[static_cast<std::size_t>(offset)] != 0; }
    void set(Index offset, bool observed);
    [[nodiscard]] Index count_observed() const noexcept { return count_; }
    [[nodiscard]] Index count_missing() const noexcept { return shape_.size() - count_; }
    [[nodiscard]] std::vector<Index> observed_cells() const;
    [[nodiscard]] std::vector<Index> missing_cells() const;

    friend bool operator==(const ObservationMask&, const ObservationMask&) = default;

private:
    Shape shape_;
    std::vector<std::uint8_t> observed_;
    Index count_ = 0;
};

/// One partially observed array. Values at missing cells are placeholders and never read.
struct PartialArray {
    MultiwayArray values;
    ObservationMask mask;

    static PartialArray complete(MultiwayArray values);
    /// Throws InvalidArgument on shape mismatch or non-finite observed values.
    void validate() const;
    [[nodiscard]] const Shape& shape() const noexcept { return values.shape(); }
};

using PartialSample = std::vector<PartialArray>;

/// Checks a sample for a common shape and valid members. Returns the cells never observed.
std::vector<Index> validate_sample(const PartialSample& sample);

}  // namespace arrayem
