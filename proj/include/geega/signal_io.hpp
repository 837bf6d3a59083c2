#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace geega::sio {

// Raw multichannel recording. Samples are stored as f32 (the on-disk width);
// numeric work downstream happens in double.
struct EegRecording {
    std::string subject_id;
    std::vector<std::string> channels;
    double sample_rate_hz = 0.0;
    int samples = 0;                   // T
    std::vector<float> data;           // [c x T] row-major
    std::vector<uint8_t> label_track;  // raw score per sample
    bool prebinarized = false;         // label track already holds 0/1

    int channel_count() const { return static_cast<int>(channels.size()); }
    float at(int ch, int t) const {
        return data[static_cast<size_t>(ch) * static_cast<size_t>(samples) + static_cast<size_t>(t)];
    }
    std::vector<double> channel(int ch) const;

    void validate() const;  // throws on any broken invariant
};

struct Segment {
    std::string subject_id;
    int label = 0;  // binary
    int channels = 0;
    int length = 0;               // L = window_seconds * sample_rate_hz
    double sample_rate_hz = 0.0;
    std::vector<float> data;      // [c x L] row-major

    std::vector<double> channel(int ch) const;
};

struct Electrode {
    std::string name;
    double x = 0.0;
    double y = 0.0;
};

struct Montage {
    std::string name;
    std::vector<Electrode> electrodes;

    int size() const { return static_cast<int>(electrodes.size()); }
    void validate() const;  // unique names, coordinates within the unit disc
};

// Built-in layouts: "consumer_4" (TP9 AF7 AF8 TP10) and "bci2a_22" (the
// 22-site 10-20 motor imagery set). Azimuthal equidistant coordinates.
Montage builtin_montage(const std::string& name);
Montage load_montage(const std::string& path);  // lines: name x y
void save_montage(const Montage& m, const std::string& path);
// Picks the built-in matching the channel count (4 or 22).
Montage montage_for(const std::vector<std::string>& channel_names);

// --- ingestion -------------------------------------------------------------

struct CsvFormat {
    double sample_rate_hz = 256.0;
    bool prebinarized = false;
};

EegRecording ingest_csv(const std::string& path, const CsvFormat& fmt);
void write_csv(const EegRecording& rec, const std::string& path);

// GEEG binary container; bit-exact round trip.
EegRecording ingest_binary(const std::string& path);
void write_binary(const EegRecording& rec, const std::string& path);

// Dispatch by extension: .csv -> CSV, anything else -> binary.
EegRecording ingest(const std::string& path, const CsvFormat& fmt = {});

// --- synthesis ---------------------------------------------------------------

struct ToneSpec {
    double freq_hz = 10.0;
    std::vector<double> channel_amps;  // one per channel
    double burst_period_s = 0.0;       // 0 = continuous
    double burst_duty = 1.0;           // active fraction of each period
};

struct ClassSignature {
    std::vector<ToneSpec> tones;
};

struct SyntheticSpec {
    std::vector<std::string> channels;
    double sample_rate_hz = 256.0;
    double seconds = 60.0;
    int subjects = 4;
    int recordings_per_class = 1;
    std::array<ClassSignature, 2> classes;
    double noise_level = 0.5;
    double subject_gain_jitter = 0.2;  // per-subject channel gain spread
    int low_score = 3;                 // raw score written for class 0
    int high_score = 8;                // raw score written for class 1

    void validate() const;
};

// Two-class band-power task, deterministic for a fixed seed. Class signatures
// put the classes apart in band-power space by construction.
std::vector<EegRecording> synthesize(const SyntheticSpec& spec, uint64_t seed);

// Default desk-scale task: 4-channel montage, elevated frontal alpha plus a
// beta burst pattern for class 1.
SyntheticSpec default_synthetic_spec();

// --- segmentation ------------------------------------------------------------

// Non-overlapping windows; the incomplete tail is dropped. Labels are
// binarized from the window's first sample.
std::vector<Segment> segment(const EegRecording& rec, double window_seconds);

// 1..5 -> 0 (low), 6..9 -> 1 (high); anything else is an error.
int binarize_label(int raw_score);

}  // namespace geega::sio
