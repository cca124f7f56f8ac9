#include "obr/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "obr/imaging.hpp"

namespace obr {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::vector<Box> PageAnnotation::boxes() const
{
    std::vector<Box> out;
    out.reserve(chars.size());
    for (const auto& c : chars) out.push_back(c.box);
    return out;
}

const char* to_string(ViolationKind kind)
{
    switch (kind) {
    case ViolationKind::syntax: return "syntax";
    case ViolationKind::dimensions: return "dimensions";
    case ViolationKind::range: return "range";
    case ViolationKind::bounds: return "bounds";
    case ViolationKind::overlap: return "overlap";
    case ViolationKind::negative_with_chars: return "negative";
    }
    return "unknown";
}

std::vector<Violation> validate(const PageAnnotation& page)
{
    std::vector<Violation> report;
    if (page.width < 1 || page.height < 1) {
        report.push_back({ViolationKind::dimensions,
                          "image size " + std::to_string(page.width) + "x" + std::to_string(page.height) +
                              " is not positive",
                          {}});
    }
    if (page.negative && !page.chars.empty()) {
        report.push_back({ViolationKind::negative_with_chars,
                          "negative example lists " + std::to_string(page.chars.size()) + " characters", {}});
    }
    for (std::size_t i = 0; i < page.chars.size(); ++i) {
        const Box& b = page.chars[i].box;
        if (!b.valid()) {
            report.push_back({ViolationKind::bounds, "character " + std::to_string(i) + " has an empty box", {i}});
            continue;
        }
        if (b.left < 0 || b.top < 0 || b.right > page.width || b.bottom > page.height) {
            std::ostringstream msg;
            msg << "character " << i << " box [" << b.left << ", " << b.top << ", " << b.right << ", "
                << b.bottom << "] extends past the " << page.width << "x" << page.height << " image";
            report.push_back({ViolationKind::bounds, msg.str(), {i}});
        }
    }

    // Sweep in left order so only horizontally overlapping pairs are tested.
    std::vector<std::size_t> order(page.chars.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return page.chars[a].box.left < page.chars[b].box.left;
    });
    for (std::size_t a = 0; a < order.size(); ++a) {
        const Box& ba = page.chars[order[a]].box;
        for (std::size_t b = a + 1; b < order.size(); ++b) {
            const Box& bb = page.chars[order[b]].box;
            if (bb.left >= ba.right) break;
            const double overlap = iou(ba, bb);
            if (overlap > kMaxTruthOverlap) {
                const auto i = std::min(order[a], order[b]);
                const auto j = std::max(order[a], order[b]);
                std::ostringstream msg;
                msg << "characters " << i << " and " << j << " overlap with IOU " << overlap;
                report.push_back({ViolationKind::overlap, msg.str(), {i, j}});
            }
        }
    }
    return report;
}

namespace {

std::string line_column(const std::string& text, std::size_t byte)
{
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

[[noreturn]] void fail(ViolationKind kind, const std::string& source, const std::string& message)
{
    throw AnnotationError(kind, source + ": " + message);
}

const json& field(const json& obj, const char* key, const std::string& context, const std::string& source)
{
    if (!obj.is_object()) fail(ViolationKind::syntax, source, context + ": expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(ViolationKind::syntax, source, context + "." + key + ": missing field");
    return *it;
}

double number(const json& obj, const char* key, const std::string& context, const std::string& source)
{
    const json& v = field(obj, key, context, source);
    if (!v.is_number()) fail(ViolationKind::syntax, source, context + "." + key + ": expected a number");
    return v.get<double>();
}

int integer(const json& obj, const char* key, const std::string& context, const std::string& source)
{
    const json& v = field(obj, key, context, source);
    if (!v.is_number_integer()) fail(ViolationKind::syntax, source, context + "." + key + ": expected an integer");
    return v.get<int>();
}

std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

json parse_json(const std::string& text, const std::string& source)
{
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ViolationKind::syntax, source, "malformed JSON at " + line_column(text, e.byte));
    }
}

PageAnnotation parse_structure(const std::string& json_text, const std::string& source)
{
    const json doc = parse_json(json_text, source);
    PageAnnotation page;
    const json& image = field(doc, "image", "page", source);
    if (!image.is_string()) fail(ViolationKind::syntax, source, "page.image: expected a string");
    page.image = image.get<std::string>();
    page.width = integer(doc, "width", "page", source);
    page.height = integer(doc, "height", "page", source);
    const json& negative = field(doc, "negative", "page", source);
    if (!negative.is_boolean()) fail(ViolationKind::syntax, source, "page.negative: expected a boolean");
    page.negative = negative.get<bool>();

    const json& chars = field(doc, "chars", "page", source);
    if (!chars.is_array()) fail(ViolationKind::syntax, source, "page.chars: expected an array");
    page.chars.reserve(chars.size());
    for (std::size_t i = 0; i < chars.size(); ++i) {
        const std::string ctx = "chars[" + std::to_string(i) + "]";
        const json& c = chars[i];
        const Box box{number(c, "left", ctx, source), number(c, "top", ctx, source),
                      number(c, "right", ctx, source), number(c, "bottom", ctx, source)};
        std::optional<ClassId> cls;
        try {
            if (c.contains("class")) {
                cls = ClassId(integer(c, "class", ctx, source));
            } else {
                const json& dots = field(c, "dots", ctx, source);
                if (!dots.is_string()) fail(ViolationKind::syntax, source, ctx + ".dots: expected a string");
                cls = encode(DotPattern::parse(dots.get<std::string>()));
            }
        } catch (const AnnotationError&) {
            throw;
        } catch (const InputError& e) {
            fail(ViolationKind::range, source, "character " + std::to_string(i) + " (" + ctx + "): " + e.what());
        }
        page.chars.push_back({box, *cls});
    }
    return page;
}

}  // namespace

PageAnnotation parse_canonical(const std::string& json_text, const std::string& source)
{
    PageAnnotation page = parse_structure(json_text, source);
    const auto report = validate(page);
    if (!report.empty()) fail(report.front().kind, source, report.front().message);
    return page;
}

std::string format_canonical(const PageAnnotation& page)
{
    std::ostringstream out;
    out << "{\n";
    out << "  \"image\": " << json(page.image).dump() << ",\n";
    out << "  \"width\": " << page.width << ",\n";
    out << "  \"height\": " << page.height << ",\n";
    out << "  \"negative\": " << (page.negative ? "true" : "false") << ",\n";
    out << "  \"chars\": [";
    for (std::size_t i = 0; i < page.chars.size(); ++i) {
        const auto& c = page.chars[i];
        ordered_json obj;
        obj["left"] = c.box.left;
        obj["top"] = c.box.top;
        obj["right"] = c.box.right;
        obj["bottom"] = c.box.bottom;
        obj["dots"] = decode(c.cls).to_string();
        out << (i == 0 ? "\n    " : ",\n    ") << obj.dump();
    }
    out << (page.chars.empty() ? "]\n" : "\n  ]\n");
    out << "}\n";
    return out.str();
}

std::vector<Violation> check_canonical(const std::filesystem::path& path)
{
    try {
        return validate(parse_structure(read_text(path), path.string()));
    } catch (const AnnotationError& e) {
        return {{e.kind(), e.what(), {}}};
    }
}

PageAnnotation load_canonical(const std::filesystem::path& path)
{
    return parse_canonical(read_text(path), path.string());
}

void save_canonical(const PageAnnotation& page, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << format_canonical(page);
}

PageAnnotation grid_to_boxes(const GridAnnotation& grid, double char_width, double char_height)
{
    const auto& v = grid.vertical_lines;
    const auto& h = grid.horizontal_lines;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] > v[i - 1])) throw InputError("vertical grid lines are not strictly increasing");
    for (std::size_t i = 1; i < h.size(); ++i)
        if (!(h[i] > h[i - 1])) throw InputError("horizontal grid lines are not strictly increasing");

    const int cols = static_cast<int>(v.size() / 2);
    const int rows = static_cast<int>(h.size() / 3);
    const Affine2D unrotate = Affine2D::rotation(-grid.rotation_deg, grid.width / 2.0, grid.height / 2.0);

    PageAnnotation page;
    page.image = grid.image;
    page.width = grid.width;
    page.height = grid.height;
    for (std::size_t i = 0; i < grid.chars.size(); ++i) {
        const auto& ch = grid.chars[i];
        if (ch.col < 0 || ch.col >= cols || ch.row < 0 || ch.row >= rows)
            throw InputError("grid character " + std::to_string(i) + " at (" + std::to_string(ch.col) + ", " +
                             std::to_string(ch.row) + ") is outside the " + std::to_string(cols) + "x" +
                             std::to_string(rows) + " grid");
        const double cx = 0.5 * (v[2 * ch.col] + v[2 * ch.col + 1]);
        const double cy = h[3 * ch.row + 1];
        Box box = Box::from_center(cx, cy, char_width, char_height);
        if (grid.rotation_deg != 0) box = transform_box(unrotate, box);
        page.chars.push_back({box, encode(ch.dots)});
    }
    return page;
}

GridAnnotation load_grid(const std::filesystem::path& path)
{
    const std::string source = path.string();
    const json doc = parse_json(read_text(path), source);
    GridAnnotation grid;
    const json& image = field(doc, "image", "grid", source);
    if (!image.is_string()) fail(ViolationKind::syntax, source, "grid.image: expected a string");
    grid.image = image.get<std::string>();
    grid.width = integer(doc, "width", "grid", source);
    grid.height = integer(doc, "height", "grid", source);
    grid.rotation_deg = doc.contains("angle") ? number(doc, "angle", "grid", source) : 0.0;
    for (const char* key : {"vertical_lines", "horizontal_lines"}) {
        const json& arr = field(doc, key, "grid", source);
        if (!arr.is_array()) fail(ViolationKind::syntax, source, std::string("grid.") + key + ": expected an array");
        auto& dst = std::string(key) == "vertical_lines" ? grid.vertical_lines : grid.horizontal_lines;
        for (const auto& x : arr) {
            if (!x.is_number()) fail(ViolationKind::syntax, source, std::string("grid.") + key + ": expected numbers");
            dst.push_back(x.get<double>());
        }
    }
    const json& chars = field(doc, "chars", "grid", source);
    if (!chars.is_array()) fail(ViolationKind::syntax, source, "grid.chars: expected an array");
    for (std::size_t i = 0; i < chars.size(); ++i) {
        const std::string ctx = "chars[" + std::to_string(i) + "]";
        GridCharacter ch;
        ch.col = integer(chars[i], "col", ctx, source);
        ch.row = integer(chars[i], "row", ctx, source);
        const json& dots = field(chars[i], "dots", ctx, source);
        if (!dots.is_string()) fail(ViolationKind::syntax, source, ctx + ".dots: expected a string");
        try {
            ch.dots = DotPattern::parse(dots.get<std::string>());
            if (ch.dots.empty()) throw InputError("no dots");
        } catch (const InputError& e) {
            fail(ViolationKind::range, source, ctx + ": " + e.what());
        }
        grid.chars.push_back(ch);
    }
    return grid;
}

DatasetSplit split_by_fraction(std::span<const Book> books, double train_fraction)
{
    if (!(train_fraction > 0 && train_fraction < 1)) throw InputError("train fraction must be in (0, 1)");
    DatasetSplit split;
    std::set<std::string> seen;
    for (const Book& book : books) {
        if (book.pages.empty()) {
            split.warnings.push_back("book '" + book.name + "' has no pages; skipped");
            continue;
        }
        const std::size_t n = book.pages.size();
        // The epsilon keeps exact products such as 0.5 * 4 from rounding up.
        const auto n_train = std::min(n, static_cast<std::size_t>(std::ceil(train_fraction * n - 1e-9)));
        for (std::size_t i = 0; i < n; ++i) {
            const PageAnnotation& page = book.pages[i];
            if (!seen.insert(page.image).second)
                throw InputError("image '" + page.image + "' appears more than once across books");
            (i < n_train ? split.train : split.test).push_back(page);
        }
    }
    return split;
}

std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw InputError("cannot open manifest " + path.string());
    const auto base = path.parent_path();
    std::vector<std::filesystem::path> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        std::filesystem::path entry = line.substr(first, last - first + 1);
        entries.push_back(entry.is_absolute() ? entry : (base / entry).lexically_normal());
    }
    return entries;
}

void write_manifest(const std::filesystem::path& path, std::span<const std::filesystem::path> entries)
{
    std::ofstream out(path);
    if (!out) throw InputError("cannot write manifest " + path.string());
    const auto base = path.parent_path();
    for (const auto& e : entries) {
        // Paths outside the manifest's directory stay absolute.
        auto rel = base.empty() ? e : std::filesystem::proximate(e, base);
        if (!rel.empty() && *rel.begin() == ".." && e.is_absolute()) rel = e;
        out << rel.generic_string() << '\n';
    }
}

}  // namespace obr
