#pragma once

#include <string>
#include <vector>

#include "xlf5/rng.hpp"

namespace xlf5 {

enum class Language { en, zh, other };

Language language_from_string(const std::string& s);
const char* language_to_string(Language lang);

struct AlignedToken {
    std::string text;
    double end_time = 0.0;  // seconds
};

struct AlignedUtterance {
    std::string utt_id;
    std::string audio_path;
    Language language = Language::en;
    std::vector<AlignedToken> tokens;  // end times strictly increasing
    double total_duration = 0.0;

    void validate() const;
};

// Prompt/target partition at a word boundary. The prompt transcript is
// discarded by construction: only the target-side text survives.
struct BoundarySplit {
    double prompt_begin = 0.0;   // always 0
    double prompt_end = 0.0;     // t_b
    double target_begin = 0.0;   // t_b
    double target_end = 0.0;     // total_duration
    std::string target_text;
    int boundary_index = -1;
};

// JSON Lines manifest, one utterance per line:
// {"utt_id": str, "audio": str, "lang": "en"|"zh"|"other", "dur": float,
//  "words": [[text, end_time_s], ...]}
std::vector<AlignedUtterance> parse_manifest(const std::string& path);
AlignedUtterance parse_manifest_line(const std::string& line, int line_no);

// Drops tokens containing digits, symbol/punctuation-only tokens, and tokens
// with characters outside the utterance's declared script. Surviving tokens
// keep their end times.
AlignedUtterance sanitize_tokens(const AlignedUtterance& utt);

// Uniformly random eligible boundary index. Boundary i is eligible when
// end_time(i) >= min_prompt, total - end_time(i) >= min_target, and at least
// one token follows it.
int select_boundary(const AlignedUtterance& utt, Rng& rng, double min_prompt = 1.0,
                    double min_target = 1.0);
std::vector<int> eligible_boundaries(const AlignedUtterance& utt, double min_prompt,
                                     double min_target);

BoundarySplit partition(const AlignedUtterance& utt, int boundary_index);

// utf-8 helpers shared with linguistic-units
std::vector<uint32_t> decode_utf8(const std::string& s);
bool is_han(uint32_t cp);

}  // namespace xlf5
