#include "xlf5/units.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "xlf5/errors.hpp"

namespace xlf5 {

Granularity granularity_from_string(const std::string& s) {
    if (s == "phoneme") return Granularity::phoneme;
    if (s == "syllable") return Granularity::syllable;
    if (s == "word") return Granularity::word;
    fail(ErrorCode::config_error, "unknown granularity: " + s);
}

const char* granularity_to_string(Granularity g) {
    switch (g) {
        case Granularity::phoneme: return "phoneme";
        case Granularity::syllable: return "syllable";
        case Granularity::word: return "word";
    }
    return "?";
}

Lexicon load_lexicon(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail(ErrorCode::io_error, "cannot open " + path);
    Lexicon lex;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        size_t first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == ';') continue;
        std::istringstream iss(line);
        std::string word;
        iss >> word;
        std::vector<std::string> phones;
        std::string ph;
        while (iss >> ph) phones.push_back(ph);
        if (phones.empty())
            fail(ErrorCode::parse_error,
                 "line " + std::to_string(line_no) + ": word without phonemes");
        std::transform(word.begin(), word.end(), word.begin(),
                       [](unsigned char c) { return char(std::tolower(c)); });
        lex.entries.emplace(word, std::move(phones));  // first entry wins
    }
    return lex;
}

PinyinPhoneTable load_pinyin_table(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail(ErrorCode::io_error, "cannot open " + path);
    PinyinPhoneTable table;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        size_t first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream iss(line);
        std::string ch;
        int count = 0;
        if (!(iss >> ch >> count) || count <= 0)
            fail(ErrorCode::parse_error, "line " + std::to_string(line_no) + ": need <char> <count>");
        auto cps = decode_utf8(ch);
        if (cps.size() != 1)
            fail(ErrorCode::parse_error,
                 "line " + std::to_string(line_no) + ": first column must be one character");
        table.emplace(cps[0], count);
    }
    return table;
}

namespace {

bool is_vowel_letter(char c) {
    switch (std::tolower(static_cast<unsigned char>(c))) {
        case 'a': case 'e': case 'i': case 'o': case 'u': case 'y': return true;
        default: return false;
    }
}

bool is_letter(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

std::string letters_only_lower(const std::string& word) {
    std::string out;
    for (char c : word)
        if (is_letter(c)) out += char(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::vector<std::string> whitespace_tokens(const std::string& text) {
    std::vector<std::string> toks;
    std::istringstream iss(text);
    std::string t;
    while (iss >> t) toks.push_back(t);
    return toks;
}

}  // namespace

int english_syllables_in_word(const std::string& word) {
    std::string w = letters_only_lower(word);
    int groups = 0;
    bool in_group = false;
    for (char c : w) {
        bool v = is_vowel_letter(c);
        if (v && !in_group) ++groups;
        in_group = v;
    }
    // silent final 'e' ("made", "battle" keeps its 'le' group via 'l'? no:
    // rule is spelling-based and deliberately simple)
    if (groups > 1 && !w.empty() && w.back() == 'e') --groups;
    return std::max(groups, 1);
}

int english_fallback_phonemes(const std::string& word) {
    std::string w = letters_only_lower(word);
    // one phoneme per letter-class run: vowel group counts 1, consonant run
    // counts one per letter
    int count = 0;
    bool in_vowel_group = false;
    for (char c : w) {
        if (is_vowel_letter(c)) {
            if (!in_vowel_group) ++count;
            in_vowel_group = true;
        } else {
            ++count;
            in_vowel_group = false;
        }
    }
    return std::max(count, 1);
}

int UnitCounter::count_units(const std::string& text, Language lang, Granularity g) const {
    auto toks = whitespace_tokens(text);
    if (toks.empty()) fail(ErrorCode::invalid_input, "empty text");

    if (lang == Language::zh) {
        auto cps = decode_utf8(text);
        int han = 0;
        for (uint32_t cp : cps)
            if (is_han(cp)) ++han;
        if (g == Granularity::word || g == Granularity::syllable) return std::max(han, 1);
        // phoneme
        int total = 0;
        for (uint32_t cp : cps) {
            if (!is_han(cp)) continue;
            auto it = pinyin.find(cp);
            total += it != pinyin.end() ? it->second : 3;
        }
        return std::max(total, 1);
    }

    // en rules; lang=other follows the en path
    switch (g) {
        case Granularity::word:
            return int(toks.size());
        case Granularity::syllable: {
            int total = 0;
            for (const auto& t : toks) total += english_syllables_in_word(t);
            return total;
        }
        case Granularity::phoneme: {
            int total = 0;
            for (const auto& t : toks) {
                std::string key = letters_only_lower(t);
                auto it = lexicon.entries.find(key);
                if (it != lexicon.entries.end())
                    total += int(it->second.size());
                else
                    total += english_fallback_phonemes(t);
            }
            return total;
        }
    }
    fail(ErrorCode::invalid_input, "unreachable granularity");
}

}  // namespace xlf5
