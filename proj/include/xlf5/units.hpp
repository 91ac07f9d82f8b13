#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "xlf5/alignment.hpp"

namespace xlf5 {

enum class Granularity { phoneme, syllable, word };

Granularity granularity_from_string(const std::string& s);
const char* granularity_to_string(Granularity g);

// Word -> phoneme sequence, lowercase keys. Duplicates keep the first entry.
struct Lexicon {
    std::unordered_map<std::string, std::vector<std::string>> entries;
    Language language = Language::en;

    bool contains(const std::string& word) const { return entries.count(word) > 0; }
    size_t size() const { return entries.size(); }
};

// Lines "WORD  PH1 PH2 ..."; blank lines and ';'-comments skipped.
Lexicon load_lexicon(const std::string& path);

// Han character -> segmental phone count, two-column text file.
using PinyinPhoneTable = std::unordered_map<uint32_t, int>;
PinyinPhoneTable load_pinyin_table(const std::string& path);

// Counting resources; default-constructed tables exercise the fallbacks.
struct UnitCounter {
    Lexicon lexicon;
    PinyinPhoneTable pinyin;

    // Positive unit count for non-empty text.
    //   word:      en whitespace tokens, zh Han characters
    //   syllable:  en vowel groups per word (silent final 'e', floor 1),
    //              zh Han characters
    //   phoneme:   en lexicon lookup with grapheme fallback, zh table lookup
    //              with fallback 3 per character
    int count_units(const std::string& text, Language lang, Granularity g) const;
};

// Per-word helpers (exposed for tests)
int english_syllables_in_word(const std::string& word);
int english_fallback_phonemes(const std::string& word);

}  // namespace xlf5
