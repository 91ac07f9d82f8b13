#include "xlf5/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "xlf5/errors.hpp"

namespace xlf5 {

double mae(const std::vector<DurationEvalRecord>& records) {
    if (records.empty()) fail(ErrorCode::invalid_input, "no records");
    double total = 0.0;
    for (const auto& r : records) total += std::abs(r.predicted_seconds - r.ground_truth_seconds);
    return total / double(records.size());
}

double mre_percent(const std::vector<DurationEvalRecord>& records) {
    if (records.empty()) fail(ErrorCode::invalid_input, "no records");
    double total = 0.0;
    for (const auto& r : records) {
        if (!(r.ground_truth_seconds > 0))
            fail(ErrorCode::invalid_input, r.utt_id + ": non-positive ground truth");
        total += std::abs(r.predicted_seconds - r.ground_truth_seconds) / r.ground_truth_seconds;
    }
    return 100.0 * total / double(records.size());
}

// ---------------------------------------------------------------------------
// synthetic pulse-train corpus
// ---------------------------------------------------------------------------

std::vector<SyntheticRateSpec> sample_rate_specs(int n, double rate_lo, double rate_hi,
                                                 double dur_lo, double dur_hi, double noise_level,
                                                 uint64_t seed) {
    Rng rng(seed);
    std::vector<SyntheticRateSpec> specs;
    specs.reserve(size_t(n));
    for (int i = 0; i < n; ++i) {
        SyntheticRateSpec s;
        s.rate = rng.uniform_range(rate_lo, rate_hi);
        s.duration_s = rng.uniform_range(dur_lo, dur_hi);
        s.noise_level = noise_level;
        specs.push_back(s);
    }
    return specs;
}

namespace {

MelSpectrogram render_pulse_train(const SyntheticRateSpec& spec, Rng& rng, const MelConfig& cfg) {
    if (!(spec.rate > 0)) fail(ErrorCode::invalid_input, "rate must be positive");
    if (spec.duration_s < 3.0 || spec.duration_s > 8.0)
        fail(ErrorCode::invalid_input, "duration must be in [3, 8] s");
    int64_t samples = int64_t(std::lround(spec.duration_s * cfg.sample_rate));
    int64_t T = samples / cfg.hop + 1;
    int64_t M = cfg.n_mels;
    MelSpectrogram mel;
    mel.config = cfg;
    mel.data = Tensor::full({T, M}, cfg.log_floor);
    // periodic broadband bursts; the phase offset keeps absolute positions
    // uninformative without changing the event count
    double period = 1.0 / spec.rate;
    double phase = rng.uniform() * period;
    for (int k = 0;; ++k) {
        double onset = phase + double(k) * period;
        if (onset >= spec.duration_s) break;
        int64_t f = int64_t(std::floor(onset * cfg.sample_rate / cfg.hop + 0.5));
        if (f >= T) break;
        for (int64_t m = 0; m < M; ++m) mel.data.at(f, m) = 0.0f;
        if (f + 1 < T)
            for (int64_t m = 0; m < M; ++m)
                mel.data.at(f + 1, m) = std::max(mel.data.at(f + 1, m), -2.0f);
    }
    if (spec.noise_level > 0.0) {
        for (int64_t i = 0; i < mel.data.numel(); ++i)
            mel.data[i] = std::max(cfg.log_floor,
                                   mel.data[i] + float(spec.noise_level * rng.normal()));
    }
    return mel;
}

}  // namespace

std::vector<RateExample> generate_synthetic_rate_corpus(const std::vector<SyntheticRateSpec>& specs,
                                                        uint64_t seed, Granularity g,
                                                        const MelConfig& cfg) {
    Rng rng(seed);
    std::vector<RateExample> out;
    out.reserve(specs.size());
    for (const auto& spec : specs) {
        Rng item_rng = rng.fork(out.size());
        RateExample ex;
        ex.mel = render_pulse_train(spec, item_rng, cfg);
        ex.true_rate = spec.rate;
        ex.granularity = g;
        out.push_back(std::move(ex));
    }
    return out;
}

// ---------------------------------------------------------------------------
// synthetic utterances
// ---------------------------------------------------------------------------

namespace {

const char* kSynthWords[] = {"hello", "world",  "speech", "voice", "sound", "water",
                             "number", "people", "friend", "house", "morning", "night",
                             "brown", "quick",  "yes",    "please", "thank", "very",
                             "good",  "time",   "first",  "long",  "down",  "over"};

uint64_t word_hash(const std::string& w) {
    uint64_t h = 1469598103934665603ULL;
    for (char c : w) {
        h ^= uint64_t(uint8_t(c));
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

std::vector<SyntheticUtterance> generate_synthetic_utterances(int n, uint64_t seed,
                                                              const MelConfig& cfg) {
    constexpr size_t kNumWords = sizeof(kSynthWords) / sizeof(kSynthWords[0]);
    Rng top(seed);
    std::vector<SyntheticUtterance> out;
    out.reserve(size_t(n));
    for (int i = 0; i < n; ++i) {
        Rng rng = top.fork(uint64_t(i));
        SyntheticUtterance s;
        char id[32];
        std::snprintf(id, sizeof(id), "synth_%04d", i);
        s.utt.utt_id = id;
        s.utt.audio_path = std::string(id) + ".wav";
        s.utt.language = Language::en;
        s.clip.sample_rate = cfg.sample_rate;

        int n_words = 5 + int(rng.uniform_int(3));
        double t = 0.15;  // leading silence
        std::vector<float>& wav = s.clip.samples;
        auto extend_to = [&](double seconds) {
            wav.resize(size_t(std::lround(seconds * cfg.sample_rate)), 0.0f);
        };
        for (int w = 0; w < n_words; ++w) {
            std::string word = kSynthWords[rng.uniform_int(kNumWords)];
            double dur = rng.uniform_range(0.28, 0.55);
            double f0 = 120.0 + double(word_hash(word) % 200);
            int64_t start = int64_t(std::lround(t * cfg.sample_rate));
            int64_t len = int64_t(std::lround(dur * cfg.sample_rate));
            extend_to(t + dur);
            for (int64_t k = 0; k < len; ++k) {
                double x = double(k) / cfg.sample_rate;
                double env = std::sin(M_PI * double(k) / double(len));  // smooth on/off
                double v = 0.28 * std::sin(2.0 * M_PI * f0 * x) +
                           0.12 * std::sin(2.0 * M_PI * 2.0 * f0 * x) +
                           0.05 * std::sin(2.0 * M_PI * 3.0 * f0 * x);
                wav[size_t(start + k)] += float(env * env * v);
            }
            t += dur;
            s.utt.tokens.push_back({word, t});
            t += rng.uniform_range(0.06, 0.12);  // inter-word gap
        }
        t += rng.uniform_range(0.15, 0.3);  // trailing silence
        extend_to(t);
        s.utt.total_duration = double(wav.size()) / cfg.sample_rate;
        s.utt.validate();
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// duration evaluation
// ---------------------------------------------------------------------------

std::vector<DurationEvalItem> make_synthetic_duration_eval_items(
    const std::vector<SyntheticRateSpec>& specs, uint64_t seed, Granularity g,
    const MelConfig& cfg) {
    auto examples = generate_synthetic_rate_corpus(specs, seed, g, cfg);
    std::vector<DurationEvalItem> items;
    items.reserve(specs.size());
    for (size_t i = 0; i < specs.size(); ++i) {
        DurationEvalItem item;
        item.utt_id = "eval_" + std::to_string(i);
        item.prompt_mel = std::move(examples[i].mel);
        // one-letter words count as exactly one unit at every granularity,
        // so the text's unit count is exact by construction
        int count = std::max of<int>(1, int(std::lround(specs[i].rate * specs[i].duration_s)));
        std::string text = "a";
        for (int k = 1; k < count; ++k) text += " a";
        item.target_text = text;
        item.gt_duration_s = double(count) / specs[i].rate;
        item.lang = Language::en;
        item.true_rate = specs[i].rate;
        items.push_back(std::move(item));
    }
    return items;
}

DurationEvalReport run_duration_eval(const std::vector<DurationEvalItem>& corpus,
                                     const std::vector<DurationEvalMethod>& methods,
                                     const UnitCounter& counter, const std::string& dataset_name) {
    if (corpus.empty()) fail(ErrorCode::invalid_input, "empty eval corpus");
    DurationEvalReport report;
    report.dataset = dataset_name;
    for (const auto& method : methods) {
        Granularity g = method.granularity;
        const RatePredictorModel* model = method.model;
        bool is_rate_method =
            method.name == "m1" || method.name == "m2" || method.name == "m3";
        if (is_rate_method) {
            g = method.name == "m1"   ? Granularity::phoneme
                : method.name == "m2" ? Granularity::syllable
                                      : Granularity::word;
            if (!model)
                fail(ErrorCode::config_error, "method " + method.name + " needs a model");
            if (model->granularity() != g)
                fail(ErrorCode::config_error,
                     "method " + method.name + " needs a " + granularity_to_string(g) +
                         " model");
        } else if (method.name != "oracle_rate" && method.name != "ground_truth") {
            fail(ErrorCode::config_error, "unknown eval method " + method.name);
        }
        RateCategorySet grid = build_category_set(g);
        std::vector<DurationEvalRecord> records;
        records.reserve(corpus.size());
        for (const auto& item : corpus) {
            DurationEvalRecord rec;
            rec.utt_id = item.utt_id;
            rec.ground_truth_seconds = item.gt_duration_s;
            rec.method = method.name;
            if (method.name == "ground_truth") {
                rec.predicted_seconds = item.gt_duration_s;
            } else if (method.name == "oracle_rate") {
                if (!item.true_rate)
                    fail(ErrorCode::config_error, item.utt_id + ": no true rate for oracle");
                double q = grid.centers[size_t(rate_to_category(*item.true_rate, grid))];
                int count = counter.count_units(item.target_text, item.lang, g);
                rec.predicted_seconds = double(count) / q;
            } else {
                int count = counter.count_units(item.target_text, item.lang, g);
                double rate = predict_rate(*model, item.prompt_mel);
                rec.predicted_seconds = double(count) / rate;
            }
            records.push_back(std::move(rec));
        }
        MethodReport mr;
        mr.mae_s = mae(records);
        mr.mre_pct = mre_percent(records);
        mr.n = int(records.size());
        report.rows.emplace_back(method.name, mr);
    }
    return report;
}

nlohmann::json DurationEvalReport::to_json() const {
    nlohmann::json methods = nlohmann::json::object();
    for (const auto& [name, r] : rows)
        methods[name] = {{"mae_s", r.mae_s}, {"mre_pct", r.mre_pct}, {"n", r.n}};
    return {{"dataset", dataset}, {"methods", methods}};
}

std::string DurationEvalReport::render_table() const {
    std::ostringstream os;
    os << "=== " << dataset << " ===\n";
    char line[128];
    std::snprintf(line, sizeof(line), "%-14s %10s %10s %8s\n", "System", "MAE(s)", "MRE(%)", "n");
    os << line;
    for (const auto& [name, r] : rows) {
        std::snprintf(line, sizeof(line), "%-14s %10.3f %10.3f %8d\n", name.c_str(), r.mae_s,
                      r.mre_pct, r.n);
        os << line;
    }
    return os.str();
}

double run_external_metric(const std::string& command, const std::string& wav_path,
                           const std::string& reference_path) {
    std::string full = command + " '" + wav_path + "' '" + reference_path + "'";
    FILE* pipe = popen(full.c_str(), "r");
    if (!pipe) fail(ErrorCode::io_error, "cannot run: " + command);
    char buf[256];
    std::string output;
    while (fgets(buf, sizeof(buf), pipe)) output += buf;
    int rc = pclose(pipe);
    if (rc != 0) fail(ErrorCode::io_error, command + " exited with status " + std::to_string(rc));
    try {
        return std::stod(output);
    } catch (const std::exception&) {
        fail(ErrorCode::parse_error, command + " did not print a number: " + output);
    }
}

}  // namespace xlf5
