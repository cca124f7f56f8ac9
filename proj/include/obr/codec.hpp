#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace obr {

/// The six dot positions of a Braille cell, numbered in the standard order:
/// dots 1-2-3 run down the left column, dots 4-5-6 down the right column.
class DotPattern {
public:
    constexpr DotPattern() = default;

    static constexpr DotPattern from_mask(std::uint8_t mask) { return DotPattern(mask & 0x3f); }

    // Parses an ascending digit list such as "124". Throws InputError.
    static DotPattern parse(std::string_view dots);

    constexpr bool has(int dot) const { return (mask_ >> (dot - 1)) & 1u; }
    constexpr DotPattern with(int dot) const { return DotPattern(mask_ | (1u << (dot - 1))); }
    constexpr bool empty() const { return mask_ == 0; }
    constexpr int count() const { return __builtin_popcount(mask_); }
    constexpr std::uint8_t mask() const { return mask_; }

    // Ascending digit list, "" for the empty pattern.
    std::string to_string() const;

    friend constexpr bool operator==(DotPattern, DotPattern) = default;

private:
    constexpr explicit DotPattern(std::uint8_t mask) : mask_(mask) {}

    std::uint8_t mask_ = 0;
};

/// Character class in [1, 63]. The value is the dot bitmask: bit i-1 is dot i.
class ClassId {
public:
    static constexpr int kCount = 63;

    // Throws InputError when value is outside [1, 63].
    explicit ClassId(int value);

    constexpr int value() const { return value_; }

    friend constexpr auto operator<=>(ClassId, ClassId) = default;

private:
    std::uint8_t value_;
};

ClassId encode(DotPattern pattern);
DotPattern decode(ClassId cls);

// Class of the horizontally reflected cell (dots 1<->4, 2<->5, 3<->6).
ClassId mirror(ClassId cls);

// UTF-8 encoding of the matching character in the Unicode Braille Patterns block.
std::string to_unicode(ClassId cls);

/// Class -> string mapping for one natural language.
class AlphabetTable {
public:
    AlphabetTable() = default;

    // Lines of the form "<dots>\t<string>"; blank lines and '#' comments are skipped.
    static AlphabetTable parse(std::string_view text);
    static AlphabetTable load(const std::filesystem::path& path);

    void set(ClassId cls, std::string text) { entries_[cls.value()] = std::move(text); }
    const std::string* find(ClassId cls) const;
    // Reverse lookup; the first class whose string equals text.
    std::optional<ClassId> lookup(std::string_view text) const;
    std::size_t size() const { return entries_.size(); }

private:
    std::map<int, std::string> entries_;
};

// Table entry, or the Unicode Braille character when the class is unmapped.
std::string to_text(ClassId cls, const AlphabetTable& table);

}  // namespace obr
