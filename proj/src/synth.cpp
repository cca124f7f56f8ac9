#include "obr/synth.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <numbers>

#include "obr/rng.hpp"

namespace obr {

int PageGeometry::columns() const
{
    const double usable = page_width - 2 * margin_left - char_width;
    return usable < 0 ? 0 : static_cast<int>(std::floor(usable / char_pitch)) + 1;
}

int PageGeometry::rows() const
{
    const double usable = page_height - 2 * margin_top - char_height;
    return usable < 0 ? 0 : static_cast<int>(std::floor(usable / line_pitch)) + 1;
}

namespace {

// Layout (flat page) -> image coordinates: rotation about the page center
// followed by a mild projective tilt.
class PageWarp {
public:
    PageWarp(const PageGeometry& g, const SynthOptions& options, Rng& rng)
        : cx_(g.page_width / 2.0), cy_(g.page_height / 2.0)
    {
        const double r = options.rotation_deg * std::numbers::pi / 180.0;
        cos_ = std::cos(r);
        sin_ = std::sin(r);
        if (options.perspective != 0) {
            const double dir = rng.uniform(0, 2 * std::numbers::pi);
            kx_ = options.perspective * std::cos(dir) / cx_;
            ky_ = options.perspective * std::sin(dir) / cy_;
        }
    }

    // Returns image point and the local scale factor.
    std::array<double, 3> operator()(double x, double y) const
    {
        const double qx = cos_ * (x - cx_) - sin_ * (y - cy_);
        const double qy = sin_ * (x - cx_) + cos_ * (y - cy_);
        const double w = 1.0 + kx_ * qx + ky_ * qy;
        return {cx_ + qx / w, cy_ + qy / w, 1.0 / w};
    }

private:
    double cx_, cy_;
    double cos_ = 1, sin_ = 0;
    double kx_ = 0, ky_ = 0;
};

}  // namespace

SyntheticPage render_synthetic_page(std::span<const BrailleRow> text, const PageGeometry& g,
                                    const SynthOptions& options, std::uint64_t seed)
{
    if (g.dot_pitch <= 0 || g.char_pitch <= 0 || g.line_pitch <= 0 || g.dot_radius <= 0 || g.char_width <= 0 ||
        g.char_height <= 0)
        throw InputError("page geometry needs positive pitches and sizes");

    Rng rng(seed);
    const int W = g.page_width;
    const int H = g.page_height;
    const PageWarp warp(g, options, rng);

    SyntheticPage page{RasterImage(W, H, 1), {}};
    page.annotation.width = W;
    page.annotation.height = H;

    struct Dot {
        double x, y, radius, contrast;
    };
    std::vector<Dot> dots;
    const double contrast = rng.uniform(35, 60);
    for (std::size_t r = 0; r < text.size(); ++r) {
        for (std::size_t k = 0; k < text[r].size(); ++k) {
            if (!text[r][k]) continue;
            const ClassId cls = *text[r][k];
            const double cx = g.margin_left + g.char_width / 2 + static_cast<double>(k) * g.char_pitch;
            const double cy = g.margin_top + g.char_height / 2 + static_cast<double>(r) * g.line_pitch;

            Box hull{1e300, 1e300, -1e300, -1e300};
            const double hx = g.char_width / 2, hy = g.char_height / 2;
            for (auto [px, py] : {std::pair{cx - hx, cy - hy}, {cx + hx, cy - hy}, {cx + hx, cy + hy}, {cx - hx, cy + hy}}) {
                const auto p = warp(px, py);
                hull.left = std::min(hull.left, p[0]);
                hull.right = std::max(hull.right, p[0]);
                hull.top = std::min(hull.top, p[1]);
                hull.bottom = std::max(hull.bottom, p[1]);
            }
            if (hull.left < 0 || hull.top < 0 || hull.right > W || hull.bottom > H)
                throw InputError("character at row " + std::to_string(r) + ", cell " + std::to_string(k) +
                                 " falls outside the " + std::to_string(W) + "x" + std::to_string(H) + " page");
            page.annotation.chars.push_back({hull, cls});

            const DotPattern pattern = decode(cls);
            for (int d = 1; d <= 6; ++d) {
                if (!pattern.has(d)) continue;
                const double dx = (d <= 3 ? -0.5 : 0.5) * g.dot_pitch;
                const double dy = (((d - 1) % 3) - 1) * g.dot_pitch;
                const double jx = rng.uniform(-0.5, 0.5), jy = rng.uniform(-0.5, 0.5);
                const auto p = warp(cx + dx + jx, cy + dy + jy);
                dots.push_back({p[0], p[1], g.dot_radius * p[2], contrast * rng.uniform(0.8, 1.2)});
            }
        }
    }
    page.annotation.negative = page.annotation.chars.empty();

    // Paper: base tone, lighting gradient, faint fibre waves.
    std::vector<double> canvas(static_cast<std::size_t>(W) * H);
    const double base = rng.uniform(175, 215);
    const double gx = options.texture ? rng.uniform(-20, 20) : 0.0;
    const double gy = options.texture ? rng.uniform(-20, 20) : 0.0;
    struct Wave {
        double fx, fy, phase, amp;
    };
    std::vector<Wave> waves;
    if (options.texture) {
        for (int i = 0; i < 4; ++i)
            waves.push_back({rng.uniform(-0.08, 0.08), rng.uniform(-0.08, 0.08), rng.uniform(0, 6.283), rng.uniform(1, 3)});
    }
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            double v = base + gx * (x / double(W) - 0.5) + gy * (y / double(H) - 0.5);
            for (const auto& w : waves) v += w.amp * std::sin(w.fx * x + w.fy * y + w.phase);
            canvas[static_cast<std::size_t>(y) * W + x] = v;
        }
    }

    // Bumps lit from above: highlight on the upper half, shade on the lower.
    for (const Dot& dot : dots) {
        const double reach = dot.radius + 1.5;
        const int x0 = std::max(0, static_cast<int>(std::floor(dot.x - reach)));
        const int x1 = std::min(W - 1, static_cast<int>(std::ceil(dot.x + reach)));
        const int y0 = std::max(0, static_cast<int>(std::floor(dot.y - reach)));
        const int y1 = std::min(H - 1, static_cast<int>(std::ceil(dot.y + reach)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double dx = x + 0.5 - dot.x, dy = y + 0.5 - dot.y;
                const double d = std::sqrt(dx * dx + dy * dy);
                const double coverage = std::clamp(dot.radius - d + 0.5, 0.0, 1.0);
                if (coverage <= 0) continue;
                const double slope = -dy / dot.radius;
                canvas[static_cast<std::size_t>(y) * W + x] += coverage * dot.contrast * (slope + 0.15);
            }
        }
    }

    auto px = page.image.pixels();
    for (std::size_t i = 0; i < canvas.size(); ++i) {
        const double noise = options.noise_sigma > 0 ? rng.normal(0, options.noise_sigma) : 0.0;
        px[i] = to_intensity(canvas[i] + noise);
    }
    return page;
}

namespace {

// Letters a..z of standard Braille with rough English frequencies (per 10000).
struct LetterWeight {
    const char* dots;
    int weight;
};
constexpr LetterWeight kLetters[] = {
    {"1", 820},    {"12", 150},   {"14", 280},   {"145", 430}, {"15", 1270}, {"124", 220},  {"1245", 200},
    {"125", 610},  {"24", 700},   {"245", 15},   {"13", 80},   {"123", 400}, {"134", 240},  {"1345", 670},
    {"135", 750},  {"1234", 190}, {"12345", 10}, {"1235", 600}, {"234", 630}, {"2345", 910}, {"136", 280},
    {"1236", 100}, {"2456", 240}, {"1346", 15},  {"13456", 200}, {"1356", 7}};

}  // namespace

std::vector<BrailleRow> random_braille_text(int rows, int cols, std::uint64_t seed)
{
    static const auto by_count = [] {
        std::array<std::vector<int>, 7> groups;
        for (int mask = 1; mask <= 63; ++mask) groups[std::popcount(static_cast<unsigned>(mask))].push_back(mask);
        return groups;
    }();
    static const int letter_total = [] {
        int t = 0;
        for (const auto& l : kLetters) t += l.weight;
        return t;
    }();
    Rng rng(seed);
    auto any_class = [&] {
        const auto& group = by_count[1 + rng.below(6)];
        return ClassId(group[rng.below(group.size())]);
    };
    auto letter = [&] {
        int r = static_cast<int>(rng.below(static_cast<std::uint64_t>(letter_total)));
        for (const auto& l : kLetters) {
            if (r < l.weight) return encode(DotPattern::parse(l.dots));
            r -= l.weight;
        }
        return encode(DotPattern::parse(kLetters[0].dots));
    };
    std::vector<BrailleRow> text(rows);
    for (auto& row : text) {
        int pos = 0;
        while (pos < cols) {
            const int len = std::min(2 + static_cast<int>(rng.below(6)), cols - pos);
            const bool letters = rng.below(2) == 0;
            for (int i = 0; i < len; ++i) row.push_back(letters ? letter() : any_class());
            pos += len;
            if (pos < cols) {
                row.push_back(std::nullopt);
                ++pos;
            }
        }
    }
    return text;
}

std::vector<BrailleRow> layout_text(std::string_view text, const AlphabetTable& table, int cols)
{
    if (cols < 1) throw InputError("layout needs at least one column");
    std::vector<BrailleRow> rows;
    auto encode_word = [&](std::string_view word) {
        BrailleRow cells;
        for (char ch : word) {
            const char lower = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            const auto cls = table.lookup(std::string_view(&lower, 1));
            if (!cls) throw InputError(std::string("no Braille cell for character '") + ch + "'");
            cells.push_back(*cls);
        }
        if (static_cast<int>(cells.size()) > cols)
            throw InputError("word '" + std::string(word) + "' is longer than a line");
        return cells;
    };
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        BrailleRow row;
        std::size_t i = 0;
        while (i < line.size()) {
            if (std::isspace(static_cast<unsigned char>(line[i]))) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
            const BrailleRow word = encode_word(line.substr(i, j - i));
            const std::size_t need = word.size() + (row.empty() ? 0 : 1);
            if (row.size() + need > static_cast<std::size_t>(cols)) {
                rows.push_back(std::move(row));
                row.clear();
            } else if (!row.empty()) {
                row.push_back(std::nullopt);
            }
            row.insert(row.end(), word.begin(), word.end());
            i = j;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

SynthOptions draw_page_options(const SynthOptions& options, std::uint64_t page_seed)
{
    Rng rng(page_seed);
    SynthOptions out = options;
    out.rotation_deg = rng.uniform(-options.rotation_deg, options.rotation_deg);
    out.perspective = rng.uniform(-options.perspective, options.perspective);
    return out;
}

std::vector<SyntheticPage> render_corpus(int pages, const PageGeometry& geometry, const SynthOptions& options,
                                         std::uint64_t seed)
{
    std::vector<SyntheticPage> out;
    for (int i = 0; i < pages; ++i) {
        const std::uint64_t page_seed = mix_seed(seed, static_cast<std::uint64_t>(i));
        const SynthOptions page_options = draw_page_options(options, page_seed);
        const auto text = random_braille_text(geometry.rows(), geometry.columns(), mix_seed(page_seed, 1));
        out.push_back(render_synthetic_page(text, geometry, page_options, mix_seed(page_seed, 2)));
    }
    return out;
}

}  // namespace obr
