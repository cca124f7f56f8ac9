#include "obr/codec.hpp"

#include <fstream>
#include <sstream>

#include "obr/error.hpp"

namespace obr {

DotPattern DotPattern::parse(std::string_view dots)
{
    DotPattern pattern;
    int previous = 0;
    for (char ch : dots) {
        if (ch < '1' || ch > '6')
            throw InputError("invalid dot '" + std::string(1, ch) + "' in \"" + std::string(dots) +
                             "\" (expected digits 1-6)");
        const int dot = ch - '0';
        if (dot <= previous)
            throw InputError("dots \"" + std::string(dots) + "\" are not strictly ascending");
        pattern = pattern.with(dot);
        previous = dot;
    }
    return pattern;
}

std::string DotPattern::to_string() const
{
    std::string out;
    for (int dot = 1; dot <= 6; ++dot)
        if (has(dot)) out.push_back(static_cast<char>('0' + dot));
    return out;
}

ClassId::ClassId(int value) : value_(static_cast<std::uint8_t>(value))
{
    if (value < 1 || value > kCount)
        throw InputError("class " + std::to_string(value) + " out of range [1, 63]");
}

ClassId encode(DotPattern pattern)
{
    if (pattern.empty()) throw InputError("no character: empty dot pattern");
    int value = 0;
    for (int i = 1; i <= 6; ++i)
        if (pattern.has(i)) value += 1 << (i - 1);
    return ClassId(value);
}

DotPattern decode(ClassId cls) { return DotPattern::from_mask(static_cast<std::uint8_t>(cls.value())); }

ClassId mirror(ClassId cls)
{
    const int v = cls.value();
    return ClassId(((v & 0b000111) << 3) | ((v & 0b111000) >> 3));
}

std::string to_unicode(ClassId cls)
{
    // U+2800 + mask, always a three-byte UTF-8 sequence.
    const unsigned cp = 0x2800u + static_cast<unsigned>(cls.value());
    std::string out;
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    return out;
}

AlphabetTable AlphabetTable::parse(std::string_view text)
{
    AlphabetTable table;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab + 1 >= line.size())
            throw InputError("alphabet line " + std::to_string(line_no) + ": expected \"<dots>\\t<text>\"");
        try {
            table.set(encode(DotPattern::parse(line.substr(0, tab))), line.substr(tab + 1));
        } catch (const InputError& e) {
            throw InputError("alphabet line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return table;
}

AlphabetTable AlphabetTable::load(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open alphabet table " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str());
}

const std::string* AlphabetTable::find(ClassId cls) const
{
    auto it = entries_.find(cls.value());
    return it == entries_.end() ? nullptr : &it->second;
}

std::optional<ClassId> AlphabetTable::lookup(std::string_view text) const
{
    for (const auto& [cls, s] : entries_)
        if (s == text) return ClassId(cls);
    return std::nullopt;
}

std::string to_text(ClassId cls, const AlphabetTable& table)
{
    if (const auto* entry = table.find(cls)) return *entry;
    return to_unicode(cls);
}

}  // namespace obr
