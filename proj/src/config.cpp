#include "obr/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace obr {

namespace {

struct Field {
    std::string section;
    std::string key;
    std::function<void(Config&, const ConfigValue&)> set;
    std::function<std::string(const Config&)> get;
};

std::string format_number(double v)
{
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

double as_number(const ConfigValue& v)
{
    if (const double* d = std::get_if<double>(&v)) return *d;
    throw ConfigError("expected a number");
}

double in_range(double v, double lo, double hi)
{
    if (!(v >= lo && v <= hi)) throw ConfigError("must be in [" + format_number(lo) + ", " + format_number(hi) + "]");
    return v;
}

double integral(double d, double lo, double hi)
{
    if (d != std::floor(d)) throw ConfigError("expected an integer");
    return in_range(d, lo, hi);
}

double as_integer(const ConfigValue& v, double lo, double hi) { return integral(as_number(v), lo, hi); }

std::vector<double> as_array(const ConfigValue& v)
{
    if (const auto* a = std::get_if<std::vector<double>>(&v)) {
        if (a->empty()) throw ConfigError("array must not be empty");
        return *a;
    }
    throw ConfigError("expected an array of numbers");
}

template <typename Access>
Field real(const char* section, const char* key, Access access, double lo, double hi)
{
    return {section, key, [=](Config& c, const ConfigValue& v) { access(c) = in_range(as_number(v), lo, hi); },
            [=](const Config& c) { return format_number(access(c)); }};
}

template <typename Access>
Field integer(const char* section, const char* key, Access access, double lo, double hi)
{
    return {section, key,
            [=](Config& c, const ConfigValue& v) {
                using T = std::remove_reference_t<decltype(access(c))>;
                access(c) = static_cast<T>(as_integer(v, lo, hi));
            },
            [=](const Config& c) { return format_number(static_cast<double>(access(c))); }};
}

template <typename Access>
Field boolean(const char* section, const char* key, Access access)
{
    return {section, key,
            [=](Config& c, const ConfigValue& v) {
                const bool* b = std::get_if<bool>(&v);
                if (!b) throw ConfigError("expected true or false");
                access(c) = *b;
            },
            [=](const Config& c) { return std::string(access(c) ? "true" : "false"); }};
}

std::string format_array(const std::vector<double>& values)
{
    std::string out = "[";
    for (std::size_t i = 0; i < values.size(); ++i) out += (i ? ", " : "") + format_number(values[i]);
    return out + "]";
}

constexpr double kSeedMax = 9007199254740992.0;  // 2^53, exact in a double

const std::vector<Field>& fields()
{
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        // detector
        f.push_back(real("detector", "anchor_width", [](auto& c) -> auto& { return c.detector.anchor_width; }, 1, 1000));
        f.push_back(real("detector", "anchor_height", [](auto& c) -> auto& { return c.detector.anchor_height; }, 1, 1000));
        f.push_back(real("detector", "score_threshold", [](auto& c) -> auto& { return c.detector.score_threshold; }, 0, 1));
        f.push_back(real("detector", "nms_iou", [](auto& c) -> auto& { return c.detector.nms_iou; }, 0, 1));
        f.push_back(integer("detector", "input_channels", [](auto& c) -> auto& { return c.detector.backbone.input_channels; }, 1, 3));
        f.push_back({"detector", "widths",
                     [](Config& c, const ConfigValue& v) {
                         const auto a = as_array(v);
                         if (a.size() != 4) throw ConfigError("expected 4 block widths");
                         std::vector<int> w;
                         for (double x : a) w.push_back(static_cast<int>(integral(x, 1, 1024)));
                         c.detector.backbone.widths = w;
                     },
                     [](const Config& c) {
                         return format_array({c.detector.backbone.widths.begin(), c.detector.backbone.widths.end()});
                     }});
        f.push_back({"detector", "depths",
                     [](Config& c, const ConfigValue& v) {
                         const auto a = as_array(v);
                         if (a.size() != 4) throw ConfigError("expected 4 block depths");
                         std::vector<int> d;
                         for (double x : a) d.push_back(static_cast<int>(integral(x, 1, 8)));
                         c.detector.backbone.depths = d;
                     },
                     [](const Config& c) {
                         return format_array({c.detector.backbone.depths.begin(), c.detector.backbone.depths.end()});
                     }});
        // loss
        f.push_back(real("loss", "positive_iou", [](auto& c) -> auto& { return c.detector.assignment.positive_iou; }, 0, 1));
        f.push_back(real("loss", "negative_iou", [](auto& c) -> auto& { return c.detector.assignment.negative_iou; }, 0, 1));
        f.push_back(real("loss", "gamma", [](auto& c) -> auto& { return c.detector.focal.gamma; }, 0, 10));
        f.push_back({"loss", "alpha",
                     [](Config& c, const ConfigValue& v) {
                         if (const auto* s = std::get_if<std::string>(&v)) {
                             if (*s != "none") throw ConfigError("expected a number in [0, 1] or \"none\"");
                             c.detector.focal.alpha.reset();
                         } else {
                             c.detector.focal.alpha = in_range(as_number(v), 0, 1);
                         }
                     },
                     [](const Config& c) {
                         return c.detector.focal.alpha ? format_number(*c.detector.focal.alpha) : std::string("\"none\"");
                     }});
        // augment
        f.push_back(real("augment", "min_width", [](auto& c) -> auto& { return c.augment.min_width; }, 16, 10000));
        f.push_back(real("augment", "max_width", [](auto& c) -> auto& { return c.augment.max_width; }, 16, 10000));
        f.push_back(real("augment", "vertical_stretch", [](auto& c) -> auto& { return c.augment.vertical_stretch; }, 0, 0.9));
        f.push_back(real("augment", "max_rotation", [](auto& c) -> auto& { return c.augment.max_rotation_deg; }, 0, 45));
        f.push_back(real("augment", "mirror_probability", [](auto& c) -> auto& { return c.augment.mirror_probability; }, 0, 1));
        f.push_back(integer("augment", "crop_width", [](auto& c) -> auto& { return c.augment.crop_width; }, 16, 4096));
        f.push_back(integer("augment", "crop_height", [](auto& c) -> auto& { return c.augment.crop_height; }, 16, 4096));
        f.push_back(integer("augment", "seed", [](auto& c) -> auto& { return c.augment.seed; }, 0, kSeedMax));
        // train
        f.push_back(real("train", "learning_rate", [](auto& c) -> auto& { return c.train.learning_rate; }, 0, 1));
        f.push_back(real("train", "adam_beta1", [](auto& c) -> auto& { return c.train.adam_beta1; }, 0, 0.999999));
        f.push_back(real("train", "adam_beta2", [](auto& c) -> auto& { return c.train.adam_beta2; }, 0, 0.999999));
        f.push_back(real("train", "adam_epsilon", [](auto& c) -> auto& { return c.train.adam_epsilon; }, 1e-12, 1));
        f.push_back(integer("train", "batch_size", [](auto& c) -> auto& { return c.train.batch_size; }, 1, 4096));
        f.push_back({"train", "stage_lambdas",
                     [](Config& c, const ConfigValue& v) {
                         const auto a = as_array(v);
                         c.train.stages.resize(a.size(), StagePlan{0, 0});
                         for (std::size_t i = 0; i < a.size(); ++i) {
                             if (!(a[i] > 0)) throw ConfigError("lambdas must be positive");
                             c.train.stages[i].lambda_cls = a[i];
                         }
                     },
                     [](const Config& c) {
                         std::vector<double> v;
                         for (const auto& s : c.train.stages) v.push_back(s.lambda_cls);
                         return format_array(v);
                     }});
        f.push_back({"train", "stage_epochs",
                     [](Config& c, const ConfigValue& v) {
                         const auto a = as_array(v);
                         c.train.stages.resize(a.size(), StagePlan{0, 0});
                         for (std::size_t i = 0; i < a.size(); ++i)
                             c.train.stages[i].epochs = static_cast<int>(integral(a[i], 1, 1e6));
                     },
                     [](const Config& c) {
                         std::vector<double> v;
                         for (const auto& s : c.train.stages) v.push_back(s.epochs);
                         return format_array(v);
                     }});
        f.push_back(integer("train", "plateau_patience", [](auto& c) -> auto& { return c.train.plateau_patience; }, 1, 1e6));
        f.push_back(real("train", "plateau_factor", [](auto& c) -> auto& { return c.train.plateau_factor; }, 1.0001, 1e6));
        f.push_back(real("train", "min_improvement", [](auto& c) -> auto& { return c.train.min_improvement; }, 0, 1));
        f.push_back(integer("train", "crops_per_page", [](auto& c) -> auto& { return c.train.crops_per_page; }, 1, 1000));
        f.push_back(integer("train", "shuffle_seed", [](auto& c) -> auto& { return c.train.shuffle_seed; }, 0, kSeedMax));
        f.push_back(integer("train", "init_seed", [](auto& c) -> auto& { return c.train.init_seed; }, 0, kSeedMax));
        f.push_back(integer("train", "eval_interval", [](auto& c) -> auto& { return c.train.eval_interval; }, 1, 1e6));
        f.push_back(integer("train", "checkpoint_interval", [](auto& c) -> auto& { return c.train.checkpoint_interval; }, 1, 1e6));
        // synth
        f.push_back(integer("synth", "page_width", [](auto& c) -> auto& { return c.geometry.page_width; }, 32, 10000));
        f.push_back(integer("synth", "page_height", [](auto& c) -> auto& { return c.geometry.page_height; }, 32, 10000));
        f.push_back(real("synth", "margin_left", [](auto& c) -> auto& { return c.geometry.margin_left; }, 0, 5000));
        f.push_back(real("synth", "margin_top", [](auto& c) -> auto& { return c.geometry.margin_top; }, 0, 5000));
        f.push_back(real("synth", "dot_pitch", [](auto& c) -> auto& { return c.geometry.dot_pitch; }, 1, 200));
        f.push_back(real("synth", "char_pitch", [](auto& c) -> auto& { return c.geometry.char_pitch; }, 1, 500));
        f.push_back(real("synth", "line_pitch", [](auto& c) -> auto& { return c.geometry.line_pitch; }, 1, 1000));
        f.push_back(real("synth", "dot_radius", [](auto& c) -> auto& { return c.geometry.dot_radius; }, 0.5, 100));
        f.push_back(real("synth", "char_width", [](auto& c) -> auto& { return c.geometry.char_width; }, 1, 500));
        f.push_back(real("synth", "char_height", [](auto& c) -> auto& { return c.geometry.char_height; }, 1, 500));
        f.push_back(real("synth", "rotation", [](auto& c) -> auto& { return c.synth.rotation_deg; }, 0, 45));
        f.push_back(real("synth", "perspective", [](auto& c) -> auto& { return c.synth.perspective; }, 0, 0.5));
        f.push_back(real("synth", "noise_sigma", [](auto& c) -> auto& { return c.synth.noise_sigma; }, 0, 100));
        f.push_back(boolean("synth", "texture", [](auto& c) -> auto& { return c.synth.texture; }));
        // inference, reader
        f.push_back(integer("inference", "width", [](auto& c) -> auto& { return c.inference_width; }, 0, 10000));
        f.push_back(real("reader", "line_link", [](auto& c) -> auto& { return c.reader.line_link; }, 0.01, 10));
        f.push_back(real("reader", "space_gap", [](auto& c) -> auto& { return c.reader.space_gap; }, 1, 10));
        return f;
    }();
    return table;
}

std::string_view trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Drops a '#' comment that is not inside a string.
std::string_view strip_comment(std::string_view line)
{
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') quoted = !quoted;
        if (line[i] == '#' && !quoted) return line.substr(0, i);
    }
    return line;
}

double parse_number(std::string_view s)
{
    s = trim(s);
    // from_chars rejects a leading '+'
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw ConfigError("cannot parse value '" + std::string(s) + "'");
    return v;
}

ConfigValue parse_value(std::string_view s)
{
    s = trim(s);
    if (s == "true") return true;
    if (s == "false") return false;
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
        const auto body = s.substr(1, s.size() - 2);
        if (body.find('"') != std::string_view::npos) throw ConfigError("malformed string");
        return std::string(body);
    }
    if (!s.empty() && s.front() == '[') {
        if (s.back() != ']') throw ConfigError("unterminated array");
        std::vector<double> out;
        auto body = trim(s.substr(1, s.size() - 2));
        while (!body.empty()) {
            const auto comma = body.find(',');
            out.push_back(parse_number(body.substr(0, comma)));
            if (comma == std::string_view::npos) break;
            body = trim(body.substr(comma + 1));
        }
        return out;
    }
    return parse_number(s);
}

const Field* find_field(std::string_view section, std::string_view key)
{
    for (const auto& f : fields())
        if (f.section == section && f.key == key) return &f;
    return nullptr;
}

bool known_section(std::string_view section)
{
    for (const auto& f : fields())
        if (f.section == section) return true;
    return false;
}

}  // namespace

void Config::validate() const
{
    auto fail = [](const std::string& what) { throw ConfigError(what); };
    try {
        detector.validate();
    } catch (const std::exception& e) {
        fail(std::string("detector: ") + e.what());
    }
    if (detector.assignment.negative_iou > detector.assignment.positive_iou)
        fail("loss.negative_iou: must not exceed loss.positive_iou");
    if (augment.min_width > augment.max_width) fail("augment.min_width: must not exceed augment.max_width");
    if (augment.crop_width % kNetworkStride || augment.crop_height % kNetworkStride)
        fail("augment.crop_width/crop_height: must be multiples of 16");
    for (std::size_t i = 0; i < train.stages.size(); ++i) {
        if (!(train.stages[i].lambda_cls > 0))
            fail("train.stage_lambdas: stage " + std::to_string(i + 1) + " has no lambda");
        if (train.stages[i].epochs < 1)
            fail("train.stage_epochs: stage " + std::to_string(i + 1) + " has no epoch count");
    }
    if (geometry.columns() < 1 || geometry.rows() < 1) fail("synth: page too small for one character");
    if (inference_width != 0 && inference_width < kNetworkStride) fail("inference.width: must be 0 or at least 16");
}

Config preset_config(std::string_view name)
{
    Config c;
    if (name == "paper") return c;
    if (name != "desk") throw ConfigError("preset: unknown preset '" + std::string(name) + "' (paper, desk)");
    c.preset = "desk";
    c.detector.backbone.depths = {1, 1, 2, 3};
    c.detector.score_threshold = 0.25;
    c.augment.min_width = 780;
    c.augment.max_width = 950;
    c.augment.vertical_stretch = 0.05;
    c.augment.max_rotation_deg = 3;
    c.augment.crop_width = 256;
    c.augment.crop_height = 256;
    c.train.learning_rate = 1e-3;
    c.train.batch_size = 8;
    c.train.crops_per_page = 4;
    c.train.adam_beta2 = 0.99;
    c.train.stages = {{1, 50}, {100, 50}, {1000, 50}};
    c.train.plateau_patience = 10;
    c.train.eval_interval = 5;
    c.train.checkpoint_interval = 25;
    c.synth.rotation_deg = 5;
    return c;
}

void apply_setting(Config& config, std::string_view section, std::string_view key, const ConfigValue& value)
{
    const std::string name = std::string(section) + "." + std::string(key);
    const Field* f = find_field(section, key);
    if (!f) throw ConfigError(name + ": unknown key");
    try {
        f->set(config, value);
    } catch (const ConfigError& e) {
        throw ConfigError(name + ": " + e.what());
    }
}

Config parse_config(std::string_view text, std::string_view source)
{
    Config config;
    std::string section;
    bool seen_setting = false;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        const auto where = std::string(source) + ":" + std::to_string(line_no) + ": ";
        const auto line = trim(strip_comment(raw));
        if (line.empty()) continue;
        try {
            if (line.front() == '[') {
                if (line.back() != ']') throw ConfigError("malformed section header");
                section = std::string(trim(line.substr(1, line.size() - 2)));
                if (!known_section(section)) throw ConfigError("unknown section [" + section + "]");
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) throw ConfigError("expected key = value");
            const auto key = trim(line.substr(0, eq));
            const auto value = parse_value(line.substr(eq + 1));
            if (section.empty()) {
                if (key != "preset") throw ConfigError(std::string(key) + ": unknown top-level key");
                if (seen_setting) throw ConfigError("preset: must come before any other setting");
                const auto* name = std::get_if<std::string>(&value);
                if (!name) throw ConfigError("preset: expected a string");
                config = preset_config(*name);
                continue;
            }
            try {
                apply_setting(config, section, key, value);
            } catch (const ConfigError& e) {
                const std::string msg = e.what();
                const std::string prefix = section + "." + std::string(key);
                throw ConfigError(msg.rfind(prefix, 0) == 0 ? msg : prefix + ": " + msg);
            }
            seen_setting = true;
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
    try {
        config.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(source) + ": " + e.what());
    }
    return config;
}

Config load_config(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), path.string());
}

void apply_override(Config& config, std::string_view assignment)
{
    const auto eq = assignment.find('=');
    const auto name = trim(assignment.substr(0, eq));
    const auto dot = name.find('.');
    if (eq == std::string_view::npos || dot == std::string_view::npos)
        throw ConfigError("override '" + std::string(assignment) + "': expected section.key=value");
    try {
        apply_setting(config, name.substr(0, dot), name.substr(dot + 1), parse_value(assignment.substr(eq + 1)));
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        throw ConfigError(msg.rfind(std::string(name), 0) == 0 ? msg : std::string(name) + ": " + msg);
    }
}

std::string format_config(const Config& config)
{
    std::ostringstream out;
    out << "preset = \"" << config.preset << "\"\n";
    std::string section;
    for (const auto& f : fields()) {
        if (f.section != section) {
            section = f.section;
            out << "\n[" << section << "]\n";
        }
        out << f.key << " = " << f.get(config) << '\n';
    }
    return out.str();
}

}  // namespace obr
