#include "arrayem/partial.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace arrayem {

ObservationMask::ObservationMask(Shape shape, std::vector<std::uint8_t> observed)
    : shape_(std::move(shape)), observed_(std::move(observed)) {
    if (static_cast<Index>(observed_.size()) != shape_.size()) throw InvalidArgument("mask does not match shape");
    for (auto& f : observed_) f = f != 0 ? 1 : 0;
    count_ = std::accumulate(observed_.begin(), observed_.end(), Index{0});
}

ObservationMask ObservationMask::all_observed(const Shape& shape) {
    return ObservationMask(shape, std::vector<std::uint8_t>(static_cast<std::size_t>(shape.size()), 1));
}

ObservationMask ObservationMask::all_missing(const Shape& shape) {
    return ObservationMask(shape, std::vector<std::uint8_t>(static_cast<std::size_t>(shape.size()), 0));
}

void ObservationMask::set(Index offset, bool observed) {
    auto& f = observed_.at(static_cast<std::size_t>(offset));
    count_ += static_cast<Index>(observed) - static_cast<Index>(f);
    f = observed ? 1 : 0;
}

std::vector<Index> ObservationMask::observed_cells() const {
    std::vector<Index> out;
    out.reserve(static_cast<std::size_t>(count_));
    for (Index c = 0; c < shape_.size(); ++c) {
        if (observed_[static_cast<std::size_t>(c)]) out.push_back(c);
    }
    return out;
}

std::vector<Index> ObservationMask::missing_cells() const {
    std::vector<Index> out;
    out.reserve(static_cast<std::size_t>(count_missing()));
    for (Index c = 0; c < shape_.size(); ++c) {
        if (!observed_[static_cast<std::size_t>(c)]) out.push_back(c);
    }
    return out;
}

PartialArray PartialArray::complete(MultiwayArray values) {
    auto mask = ObservationMask::all_observed(values.shape());
    return {std::move(values), std::move(mask)};
}

void PartialArray::validate() const {
    if (!(values.shape() == mask.shape())) throw InvalidArgument("mask shape does not match values");
    for (Index c = 0; c < values.size(); ++c) {
        if (mask.observed(c) && !std::isfinite(values[c])) {
            throw InvalidArgument("observed cell " + std::to_string(c + 1) + " is not finite");
        }
    }
}

std::vector<Index> validate_sample(const PartialSample& sample) {
    if (sample.empty()) throw InvalidArgument("sample is empty");
    const Shape& shape = sample.front().shape();
    std::vector<bool> seen(static_cast<std::size_t>(shape.size()), false);
    for (const auto& obs : sample) {
        if (!(obs.shape() == shape)) throw InvalidArgument("sample members have different shapes");
        obs.validate();
        for (Index c = 0; c < shape.size(); ++c) {
            if (obs.mask.observed(c)) seen[static_cast<std::size_t>(c)] = true;
        }
    }
    std::vector<Index> never;
    for (Index c = 0; c < shape.size(); ++c) {
        if (!seen[static_cast<std::size_t>(c)]) never.push_back(c);
    }
    return never;
}

}  // namespace arrayem
