#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "obr/imaging.hpp"
#include "obr/loss.hpp"
#include "obr/network.hpp"

namespace obr {

struct DetectorConfig {
    double anchor_width = 20;
    double anchor_height = 32;
    BackboneSpec backbone;
    AssignmentThresholds assignment;
    FocalParams focal;
    double score_threshold = 0.5;
    double nms_iou = 0.02;

    void validate() const;
};

/// Per anchor: best class by sigmoid score; anchors scoring at least
/// score_threshold become boxes, then class-agnostic NMS.
template <typename T>
std::vector<Detection> decode_output(const Tensor<T>& output, const AnchorGrid& anchors, double score_threshold,
                                     double nms_iou = 0.02);

class Detector {
public:
    Detector(DetectorConfig config, std::uint64_t seed);
    Detector(DetectorConfig config, Network network);

    const DetectorConfig& config() const { return config_; }
    Network& network() { return network_; }
    const Network& network() const { return network_; }

    AnchorGrid anchors_for(int width, int height) const;

    // Input dimensions must be multiples of 16.
    std::vector<Detection> detect(const NormalizedImage& input) const;
    std::vector<Detection> detect(const NormalizedImage& input, double score_threshold) const;

private:
    DetectorConfig config_;
    Network network_;
};

Detector build_reference_network(std::uint64_t seed, const DetectorConfig& config = {});

struct NamedTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<float> values;
};

/// Checkpoint container, little-endian:
///   "OBRCKPT\0", u32 version,
///   u32 length + config JSON, u32 length + state JSON (may be empty),
///   u32 count, then per tensor: u32 length + name, u32 ndim, u32 dims[ndim], f32 data.
/// Network tensors use their parameter names; other tensors (optimizer
/// moments) are carried through unchanged.
struct Checkpoint {
    Detector detector;
    std::string state_json;
    std::vector<NamedTensor> extra;
};

std::string config_to_json(const DetectorConfig& config);
DetectorConfig config_from_json(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const Detector& detector, const std::string& state_json = {},
                     const std::vector<NamedTensor>& extra = {});

// Validates the header and every tensor shape; throws ModelError.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace obr
