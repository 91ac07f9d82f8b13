#include "xlf5/alignment.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "xlf5/errors.hpp"

namespace xlf5 {

using nlohmann::json;

Language language_from_string(const std::string& s) {
    if (s == "en") return Language::en;
    if (s == "zh") return Language::zh;
    return Language::other;
}

const char* language_to_string(Language lang) {
    switch (lang) {
        case Language::en: return "en";
        case Language::zh: return "zh";
        case Language::other: return "other";
    }
    return "other";
}

void AlignedUtterance::validate() const {
    if (tokens.empty()) fail(ErrorCode::validation_error, utt_id + ": no tokens");
    double prev = 0.0;
    for (const auto& t : tokens) {
        if (t.text.empty()) fail(ErrorCode::validation_error, utt_id + ": empty token text");
        if (!(t.end_time > prev))
            fail(ErrorCode::validation_error, utt_id + ": non-monotone end times");
        prev = t.end_time;
    }
    if (prev > total_duration + 1e-9)
        fail(ErrorCode::validation_error, utt_id + ": last end time exceeds duration");
}

AlignedUtterance parse_manifest_line(const std::string& line, int line_no) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        fail(ErrorCode::parse_error, "line " + std::to_string(line_no) + ": " + e.what());
    }
    AlignedUtterance utt;
    try {
        utt.utt_id = j.at("utt_id").get<std::string>();
        utt.audio_path = j.at("audio").get<std::string>();
        utt.language = language_from_string(j.at("lang").get<std::string>());
        utt.total_duration = j.at("dur").get<double>();
        for (const auto& w : j.at("words")) {
            if (!w.is_array() || w.size() != 2)
                fail(ErrorCode::parse_error,
                     "line " + std::to_string(line_no) + ": words entries must be [text, end]");
            utt.tokens.push_back({w[0].get<std::string>(), w[1].get<double>()});
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::parse_error, "line " + std::to_string(line_no) + ": " + e.what());
    }
    utt.validate();
    return utt;
}

std::vector<AlignedUtterance> parse_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail(ErrorCode::io_error, "cannot open " + path);
    std::vector<AlignedUtterance> out;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(parse_manifest_line(line, line_no));
    }
    return out;
}

std::vector<uint32_t> decode_utf8(const std::string& s) {
    std::vector<uint32_t> cps;
    size_t i = 0;
    while (i < s.size()) {
        uint8_t c = uint8_t(s[i]);
        uint32_t cp = 0;
        int extra = 0;
        if (c < 0x80) {
            cp = c;
        } else if ((c >> 5) == 0x6) {
            cp = c & 0x1f;
            extra = 1;
        } else if ((c >> 4) == 0xe) {
            cp = c & 0x0f;
            extra = 2;
        } else if ((c >> 3) == 0x1e) {
            cp = c & 0x07;
            extra = 3;
        } else {
            cp = 0xfffd;  // stray continuation byte
        }
        ++i;
        for (int k = 0; k < extra && i < s.size(); ++k, ++i) {
            uint8_t cc = uint8_t(s[i]);
            if ((cc >> 6) != 0x2) {
                cp = 0xfffd;
                break;
            }
            cp = (cp << 6) | (cc & 0x3f);
        }
        cps.push_back(cp);
    }
    return cps;
}

bool is_han(uint32_t cp) { return cp >= 0x4e00 && cp <= 0x9fff; }

namespace {

bool is_ascii_letter(uint32_t cp) {
    return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
}

bool is_digit_cp(uint32_t cp) { return cp >= '0' && cp <= '9'; }

// letter in any script, for the symbol-only rule under lang=other
bool is_letterish(uint32_t cp) { return is_ascii_letter(cp) || cp >= 0x80; }

bool token_ok(const std::string& text, Language lang) {
    auto cps = decode_utf8(text);
    bool any_letter = false;
    for (uint32_t cp : cps) {
        if (is_digit_cp(cp)) return false;
        switch (lang) {
            case Language::en:
                // ASCII letters plus apostrophe/hyphen
                if (is_ascii_letter(cp)) {
                    any_letter = true;
                } else if (cp == '\'' || cp == '-') {
                    // allowed joiners
                } else {
                    return false;
                }
                break;
            case Language::zh:
                if (is_han(cp))
                    any_letter = true;
                else
                    return false;
                break;
            case Language::other:
                // no script constraint; just track letters for the
                // symbol-only rule
                if (is_letterish(cp)) any_letter = true;
                break;
        }
    }
    return any_letter;  // symbol/punctuation-only tokens are dropped
}

}  // namespace

AlignedUtterance sanitize_tokens(const AlignedUtterance& utt) {
    AlignedUtterance out = utt;
    out.tokens.clear();
    for (const auto& tok : utt.tokens)
        if (token_ok(tok.text, utt.language)) out.tokens.push_back(tok);
    if (out.tokens.empty())
        fail(ErrorCode::empty_after_sanitize, utt.utt_id);
    return out;
}

std::vector<int> eligible_boundaries(const AlignedUtterance& utt, double min_prompt,
                                     double min_target) {
    std::vector<int> eligible;
    int n = int(utt.tokens.size());
    for (int i = 0; i + 1 < n; ++i) {
        double tb = utt.tokens[size_t(i)].end_time;
        if (tb >= min_prompt && utt.total_duration - tb >= min_target) eligible.push_back(i);
    }
    return eligible;
}

int select_boundary(const AlignedUtterance& utt, Rng& rng, double min_prompt, double min_target) {
    auto eligible = eligible_boundaries(utt, min_prompt, min_target);
    if (eligible.empty()) fail(ErrorCode::no_eligible_boundary, utt.utt_id);
    return eligible[size_t(rng.uniform_int(eligible.size()))];
}

BoundarySplit partition(const AlignedUtterance& utt, int boundary_index) {
    int n = int(utt.tokens.size());
    if (boundary_index < 0 || boundary_index >= n - 1)
        fail(ErrorCode::invalid_boundary,
             utt.utt_id + ": boundary " + std::to_string(boundary_index));
    BoundarySplit split;
    split.boundary_index = boundary_index;
    split.prompt_begin = 0.0;
    split.prompt_end = utt.tokens[size_t(boundary_index)].end_time;
    split.target_begin = split.prompt_end;
    split.target_end = utt.total_duration;
    std::string joiner = utt.language == Language::zh ? "" : " ";
    for (int i = boundary_index + 1; i < n; ++i) {
        if (i > boundary_index + 1) split.target_text += joiner;
        split.target_text += utt.tokens[size_t(i)].text;
    }
    return split;
}

}  // namespace xlf5
