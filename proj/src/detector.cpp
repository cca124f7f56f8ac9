#include "obr/detector.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "obr/error.hpp"

namespace obr {

void DetectorConfig::validate() const
{
    if (!(anchor_width > 0) || !(anchor_height > 0)) throw InputError("anchor dimensions must be positive");
    backbone.validate();
    if (!(assignment.negative_iou >= 0 && assignment.negative_iou <= assignment.positive_iou &&
          assignment.positive_iou <= 1))
        throw InputError("assignment thresholds must satisfy 0 <= negative_iou <= positive_iou <= 1");
    if (!(focal.gamma >= 0)) throw InputError("focal gamma must be nonnegative");
    if (focal.alpha && !(*focal.alpha > 0 && *focal.alpha < 1)) throw InputError("focal alpha must be in (0, 1)");
    if (!(score_threshold >= 0 && score_threshold <= 1)) throw InputError("score_threshold must be in [0, 1]");
    if (!(nms_iou >= 0 && nms_iou <= 1)) throw InputError("nms_iou must be in [0, 1]");
}

template <typename T>
std::vector<Detection> decode_output(const Tensor<T>& output, const AnchorGrid& anchors, double score_threshold,
                                     double nms_iou)
{
    if (output.channels() != kOutputChannels || output.height() != anchors.rows() ||
        output.width() != anchors.cols())
        throw InputError("detector output does not match the anchor grid");
    if (!(score_threshold >= 0 && score_threshold <= 1)) throw InputError("score threshold must be in [0, 1]");

    // Sigmoid is monotone: compare logits, then convert the winner only.
    const double min_logit = score_threshold <= 0   ? -INFINITY
                             : score_threshold >= 1 ? INFINITY
                                                    : std::log(score_threshold / (1 - score_threshold));
    // Keeps exp() finite for wildly wrong size predictions.
    constexpr double kMaxLogScale = 4.0;
    const std::size_t plane = output.plane_size();
    const T* data = output.data().data();

    std::vector<Detection> candidates;
    for (std::size_t a = 0; a < plane; ++a) {
        int best = 0;
        T best_logit = data[kBoxChannels * plane + a];
        for (int k = 1; k < kNumClasses; ++k) {
            const T v = data[(kBoxChannels + k) * plane + a];
            if (v > best_logit) {
                best_logit = v;
                best = k;
            }
        }
        if (static_cast<double>(best_logit) < min_logit) continue;
        const double score = 1.0 / (1.0 + std::exp(-static_cast<double>(best_logit)));
        if (score < score_threshold) continue;
        const BoxDelta delta{static_cast<double>(data[a]), static_cast<double>(data[plane + a]),
                             std::clamp(static_cast<double>(data[2 * plane + a]), -kMaxLogScale, kMaxLogScale),
                             std::clamp(static_cast<double>(data[3 * plane + a]), -kMaxLogScale, kMaxLogScale)};
        candidates.push_back({decode_delta(anchors.anchor(static_cast<int>(a)), delta), ClassId(best + 1), score});
    }
    return nms(candidates, nms_iou);
}

template std::vector<Detection> decode_output(const Tensor<float>&, const AnchorGrid&, double, double);
template std::vector<Detection> decode_output(const Tensor<double>&, const AnchorGrid&, double, double);

Detector::Detector(DetectorConfig config, std::uint64_t seed)
    : config_(std::move(config)), network_(config_.backbone, seed)
{
    config_.validate();
}

Detector::Detector(DetectorConfig config, Network network) : config_(std::move(config)), network_(std::move(network))
{
    config_.validate();
    if (!(network_.spec() == config_.backbone)) throw ModelError("network does not match the configured backbone");
}

AnchorGrid Detector::anchors_for(int width, int height) const
{
    return make_anchors(width, height, config_.anchor_width, config_.anchor_height);
}

std::vector<Detection> Detector::detect(const NormalizedImage& input) const
{
    return detect(input, config_.score_threshold);
}

std::vector<Detection> Detector::detect(const NormalizedImage& input, double score_threshold) const
{
    const Tensor<float> output = network_.forward(input);
    return decode_output(output, anchors_for(input.width(), input.height()), score_threshold, config_.nms_iou);
}

Detector build_reference_network(std::uint64_t seed, const DetectorConfig& config) { return Detector(config, seed); }

std::string config_to_json(const DetectorConfig& c)
{
    nlohmann::ordered_json j;
    j["anchor_width"] = c.anchor_width;
    j["anchor_height"] = c.anchor_height;
    j["backbone"] = {{"input_channels", c.backbone.input_channels},
                     {"widths", c.backbone.widths},
                     {"depths", c.backbone.depths}};
    j["positive_iou"] = c.assignment.positive_iou;
    j["negative_iou"] = c.assignment.negative_iou;
    j["focal_gamma"] = c.focal.gamma;
    j["focal_alpha"] = c.focal.alpha ? nlohmann::ordered_json(*c.focal.alpha) : nlohmann::ordered_json(nullptr);
    j["score_threshold"] = c.score_threshold;
    j["nms_iou"] = c.nms_iou;
    return j.dump();
}

DetectorConfig config_from_json(const std::string& text)
{
    try {
        const auto j = nlohmann::json::parse(text);
        DetectorConfig c;
        c.anchor_width = j.at("anchor_width").get<double>();
        c.anchor_height = j.at("anchor_height").get<double>();
        const auto& b = j.at("backbone");
        c.backbone.input_channels = b.at("input_channels").get<int>();
        c.backbone.widths = b.at("widths").get<std::vector<int>>();
        c.backbone.depths = b.at("depths").get<std::vector<int>>();
        c.assignment.positive_iou = j.at("positive_iou").get<double>();
        c.assignment.negative_iou = j.at("negative_iou").get<double>();
        c.focal.gamma = j.at("focal_gamma").get<double>();
        const auto& alpha = j.at("focal_alpha");
        c.focal.alpha = alpha.is_null() ? std::nullopt : std::optional<double>(alpha.get<double>());
        c.score_threshold = j.at("score_threshold").get<double>();
        c.nms_iou = j.at("nms_iou").get<double>();
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ModelError(std::string("invalid detector config: ") + e.what());
    } catch (const InputError& e) {
        throw ModelError(std::string("invalid detector config: ") + e.what());
    }
}

namespace {

constexpr char kMagic[8] = {'O', 'B', 'R', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
    explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary)
    {
        if (!out_) throw InputError("cannot write checkpoint " + path.string());
    }
    void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
    void u32(std::uint32_t v)
    {
        if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap32(v);
        bytes(&v, 4);
    }
    void string(const std::string& s)
    {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void floats(const std::vector<float>& v)
    {
        for (float f : v) u32(std::bit_cast<std::uint32_t>(f));
    }
    void finish()
    {
        out_.flush();
        if (!out_) throw InputError("failed writing checkpoint");
    }

private:
    std::ofstream out_;
};

class Reader {
public:
    Reader(std::string data, std::string source) : data_(std::move(data)), source_(std::move(source)) {}
    void bytes(void* p, std::size_t n)
    {
        if (n > data_.size() - pos_) throw ModelError(source_ + ": checkpoint is truncated");
        std::memcpy(p, data_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32()
    {
        std::uint32_t v;
        bytes(&v, 4);
        if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap32(v);
        return v;
    }
    std::string string()
    {
        const std::uint32_t n = u32();
        if (n > data_.size() - pos_) throw ModelError(source_ + ": checkpoint is truncated");
        std::string s(data_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    std::vector<float> floats(std::size_t n)
    {
        if (n > (data_.size() - pos_) / 4) throw ModelError(source_ + ": checkpoint is truncated");
        std::vector<float> v(n);
        for (auto& f : v) f = std::bit_cast<float>(u32());
        return v;
    }
    bool done() const { return pos_ == data_.size(); }

private:
    std::string data_;
    std::string source_;
    std::size_t pos_ = 0;
};

std::size_t element_count(const std::vector<int>& shape)
{
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Detector& detector, const std::string& state_json,
                     const std::vector<NamedTensor>& extra)
{
    const auto tmp = path.string() + ".tmp";
    {
        Writer w(tmp);
        w.bytes(kMagic, sizeof(kMagic));
        w.u32(kVersion);
        w.string(config_to_json(detector.config()));
        w.string(state_json);
        const auto& params = detector.network().parameters();
        w.u32(static_cast<std::uint32_t>(params.size() + extra.size()));
        auto put = [&](const std::string& name, const std::vector<int>& shape, const std::vector<float>& values) {
            w.string(name);
            w.u32(static_cast<std::uint32_t>(shape.size()));
            for (int d : shape) w.u32(static_cast<std::uint32_t>(d));
            w.floats(values);
        };
        for (const auto& p : params) put(p.name, p.shape, p.value);
        for (const auto& t : extra) put(t.name, t.shape, t.values);
        w.finish();
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ModelError("cannot open checkpoint " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(std::move(data), path.string());

    char magic[8];
    r.bytes(magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw ModelError(path.string() + ": not a checkpoint file");
    if (const auto version = r.u32(); version != kVersion)
        throw ModelError(path.string() + ": unsupported checkpoint version " + std::to_string(version));

    DetectorConfig config = config_from_json(r.string());
    std::string state = r.string();
    Network network(config.backbone, 0);

    std::map<std::string, std::size_t> by_name;
    for (std::size_t i = 0; i < network.parameters().size(); ++i) by_name[network.parameters()[i].name] = i;
    std::vector<bool> loaded(network.parameters().size(), false);
    std::vector<NamedTensor> extra;

    const std::uint32_t count = r.u32();
    for (std::uint32_t t = 0; t < count; ++t) {
        NamedTensor tensor;
        tensor.name = r.string();
        const std::uint32_t ndim = r.u32();
        if (ndim > 8) throw ModelError(path.string() + ": tensor '" + tensor.name + "' has implausible rank");
        for (std::uint32_t d = 0; d < ndim; ++d) tensor.shape.push_back(static_cast<int>(r.u32()));
        tensor.values = r.floats(element_count(tensor.shape));

        auto it = by_name.find(tensor.name);
        if (it == by_name.end()) {
            extra.push_back(std::move(tensor));
            continue;
        }
        auto& param = network.parameters()[it->second];
        if (tensor.shape != param.shape)
            throw ModelError(path.string() + ": tensor '" + tensor.name + "' has the wrong shape");
        if (loaded[it->second]) throw ModelError(path.string() + ": duplicate tensor '" + tensor.name + "'");
        param.value = std::move(tensor.values);
        loaded[it->second] = true;
    }
    for (std::size_t i = 0; i < loaded.size(); ++i)
        if (!loaded[i]) throw ModelError(path.string() + ": missing tensor '" + network.parameters()[i].name + "'");
    if (!r.done()) throw ModelError(path.string() + ": trailing bytes after the last tensor");

    return {Detector(std::move(config), std::move(network)), std::move(state), std::move(extra)};
}

}  // namespace obr
