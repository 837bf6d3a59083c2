#include "geega/signal_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "geega/binio.hpp"

namespace geega::sio {

namespace {

constexpr double kPi = std::numbers::pi;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

uint64_t mix64(uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

}  // namespace

std::vector<double> EegRecording::channel(int ch) const {
    std::vector<double> out(static_cast<size_t>(samples));
    for (int t = 0; t < samples; ++t) out[static_cast<size_t>(t)] = at(ch, t);
    return out;
}

std::vector<double> Segment::channel(int ch) const {
    std::vector<double> out(static_cast<size_t>(length));
    for (int t = 0; t < length; ++t)
        out[static_cast<size_t>(t)] =
            data[static_cast<size_t>(ch) * static_cast<size_t>(length) + static_cast<size_t>(t)];
    return out;
}

void EegRecording::validate() const {
    if (channels.empty()) fail("recording '" + subject_id + "': no channels");
    if (samples < 1) fail("recording '" + subject_id + "': no samples");
    if (!(sample_rate_hz > 0.0)) fail("recording '" + subject_id + "': sample rate must be positive");
    if (data.size() != static_cast<size_t>(channel_count()) * static_cast<size_t>(samples))
        fail("recording '" + subject_id + "': data size mismatch");
    if (label_track.size() != static_cast<size_t>(samples))
        fail("recording '" + subject_id + "': label track size mismatch");
    for (int c = 0; c < channel_count(); ++c)
        for (int t = 0; t < samples; ++t)
            if (!std::isfinite(at(c, t)))
                fail("recording '" + subject_id + "': non-finite sample at channel " +
                     channels[static_cast<size_t>(c)] + ", row " + std::to_string(t));
}

void Montage::validate() const {
    if (electrodes.empty()) fail("montage '" + name + "': empty");
    std::set<std::string> seen;
    for (const auto& e : electrodes) {
        if (!seen.insert(e.name).second) fail("montage '" + name + "': duplicate electrode " + e.name);
        if (e.x * e.x + e.y * e.y > 1.0 + 1e-9)
            fail("montage '" + name + "': electrode " + e.name + " outside the unit disc");
    }
}

namespace {

// Standard 10-20/10-10 sites, azimuthal equidistant projection
// (vertex at origin, nose +y, ear-level circle at radius 0.9).
const std::vector<Electrode> kConsumer4 = {
    {"TP9", -0.855951, -0.278115},
    {"AF7", -0.423205, 0.582492},
    {"AF8", 0.423205, 0.582492},
    {"TP10", 0.855951, -0.278115},
};

const std::vector<Electrode> kBci2a22 = {
    {"Fz", 0.0, 0.36},        {"FC3", -0.344105, 0.189127}, {"FC1", -0.172226, 0.182202},
    {"FCz", 0.0, 0.18},       {"FC2", 0.172226, 0.182202},  {"FC4", 0.344105, 0.189127},
    {"C5", -0.54, 0.0},       {"C3", -0.36, 0.0},           {"C1", -0.18, 0.0},
    {"Cz", 0.0, 0.0},         {"C2", 0.18, 0.0},            {"C4", 0.36, 0.0},
    {"C6", 0.54, 0.0},        {"CP3", -0.344105, -0.189127},{"CP1", -0.172226, -0.182202},
    {"CPz", 0.0, -0.18},      {"CP2", 0.172226, -0.182202}, {"CP4", 0.344105, -0.189127},
    {"P1", -0.148524, -0.363407}, {"Pz", 0.0, -0.36},       {"P2", 0.148524, -0.363407},
    {"POz", 0.0, -0.54},
};

}  // namespace

Montage builtin_montage(const std::string& name) {
    Montage m;
    m.name = name;
    if (name == "consumer_4")
        m.electrodes = kConsumer4;
    else if (name == "bci2a_22")
        m.electrodes = kBci2a22;
    else
        fail("unknown built-in montage: " + name);
    m.validate();
    return m;
}

Montage load_montage(const std::string& path) {
    auto is = binio::open_in(path);
    Montage m;
    m.name = std::filesystem::path(path).stem().string();
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        Electrode e;
        if (!(ss >> e.name >> e.x >> e.y)) fail("montage file " + path + ": bad line '" + line + "'");
        m.electrodes.push_back(e);
    }
    m.validate();
    return m;
}

void save_montage(const Montage& m, const std::string& path) {
    auto os = binio::open_out(path);
    for (const auto& e : m.electrodes) os << e.name << " " << e.x << " " << e.y << "\n";
}

Montage montage_for(const std::vector<std::string>& channel_names) {
    for (const char* name : {"consumer_4", "bci2a_22"}) {
        Montage m = builtin_montage(name);
        if (m.size() != static_cast<int>(channel_names.size())) continue;
        // reorder to the recording's channel order when the names match
        Montage ordered;
        ordered.name = m.name;
        bool ok = true;
        for (const auto& ch : channel_names) {
            auto it = std::find_if(m.electrodes.begin(), m.electrodes.end(),
                                   [&](const Electrode& e) { return e.name == ch; });
            if (it == m.electrodes.end()) {
                ok = false;
                break;
            }
            ordered.electrodes.push_back(*it);
        }
        if (ok) return ordered;
        return m;  // same channel count, different names: positional mapping
    }
    fail("no built-in montage with " + std::to_string(channel_names.size()) + " channels");
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

EegRecording ingest_csv(const std::string& path, const CsvFormat& fmt) {
    auto is = binio::open_in(path);
    std::string line;
    if (!std::getline(is, line)) fail("csv " + path + ": empty file");
    auto header = split_csv(line);
    if (header.size() < 3 || header.front() != "time" || header.back() != "label")
        fail("csv " + path + ": malformed header (want time,<channels...>,label)");

    EegRecording rec;
    rec.subject_id = std::filesystem::path(path).stem().string();
    rec.sample_rate_hz = fmt.sample_rate_hz;
    rec.prebinarized = fmt.prebinarized;
    rec.channels.assign(header.begin() + 1, header.end() - 1);
    const size_t ncols = header.size();

    std::vector<std::vector<float>> cols(rec.channels.size());
    int row = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto fields = split_csv(line);
        if (fields.size() != ncols)
            fail("csv " + path + ": row " + std::to_string(row + 1) + " has " +
                 std::to_string(fields.size()) + " fields, expected " + std::to_string(ncols));
        for (size_t c = 0; c < rec.channels.size(); ++c) {
            double v;
            try {
                v = std::stod(fields[c + 1]);
            } catch (const std::exception&) {
                fail("csv " + path + ": row " + std::to_string(row + 1) + ", column " +
                     rec.channels[c] + ": not a number ('" + fields[c + 1] + "')");
            }
            if (!std::isfinite(v))
                fail("csv " + path + ": row " + std::to_string(row + 1) + ", column " +
                     rec.channels[c] + ": non-finite sample");
            cols[c].push_back(static_cast<float>(v));
        }
        int lab;
        try {
            lab = std::stoi(fields.back());
        } catch (const std::exception&) {
            fail("csv " + path + ": row " + std::to_string(row + 1) + ": bad label '" +
                 fields.back() + "'");
        }
        if (lab < 0 || lab > 9)
            fail("csv " + path + ": row " + std::to_string(row + 1) + ": label out of range");
        rec.label_track.push_back(static_cast<uint8_t>(lab));
        ++row;
    }
    if (row == 0) fail("csv " + path + ": no sample rows");
    rec.samples = row;
    rec.data.resize(rec.channels.size() * static_cast<size_t>(row));
    for (size_t c = 0; c < rec.channels.size(); ++c)
        std::copy(cols[c].begin(), cols[c].end(), rec.data.begin() + c * static_cast<size_t>(row));
    rec.validate();
    return rec;
}

void write_csv(const EegRecording& rec, const std::string& path) {
    auto os = binio::open_out(path);
    os << "time";
    for (const auto& ch : rec.channels) os << "," << ch;
    os << ",label\n";
    os.precision(9);
    for (int t = 0; t < rec.samples; ++t) {
        os << (static_cast<double>(t) / rec.sample_rate_hz);
        for (int c = 0; c < rec.channel_count(); ++c) os << "," << rec.at(c, t);
        os << "," << static_cast<int>(rec.label_track[static_cast<size_t>(t)]) << "\n";
    }
}

// ---------------------------------------------------------------------------
// GEEG binary container
// Layout: magic 'GEEG', version u16, c u16, T u64, sample_rate f64,
//         subject string, c channel-name strings, prebinarized u8,
//         row-major f32 samples [c x T], label block (T x u8 raw score).
// ---------------------------------------------------------------------------

void write_binary(const EegRecording& rec, const std::string& path) {
    rec.validate();
    auto os = binio::open_out(path);
    binio::write_magic(os, "GEEG");
    binio::write_raw<uint16_t>(os, 1);
    binio::write_raw<uint16_t>(os, static_cast<uint16_t>(rec.channel_count()));
    binio::write_raw<uint64_t>(os, static_cast<uint64_t>(rec.samples));
    binio::write_raw<double>(os, rec.sample_rate_hz);
    binio::write_string(os, rec.subject_id);
    for (const auto& ch : rec.channels) binio::write_string(os, ch);
    binio::write_raw<uint8_t>(os, rec.prebinarized ? 1 : 0);
    for (float v : rec.data) binio::write_raw<float>(os, v);
    for (uint8_t l : rec.label_track) binio::write_raw<uint8_t>(os, l);
    if (!os) fail("write failed: " + path);
}

EegRecording ingest_binary(const std::string& path) {
    auto is = binio::open_in(path);
    binio::expect_magic(is, "GEEG", "recording " + path);
    uint16_t version = binio::read_raw<uint16_t>(is);
    if (version != 1) fail("recording " + path + ": unsupported version");
    EegRecording rec;
    uint16_t c = binio::read_raw<uint16_t>(is);
    uint64_t t = binio::read_raw<uint64_t>(is);
    rec.sample_rate_hz = binio::read_raw<double>(is);
    rec.subject_id = binio::read_string(is);
    for (uint16_t i = 0; i < c; ++i) rec.channels.push_back(binio::read_string(is));
    rec.prebinarized = binio::read_raw<uint8_t>(is) != 0;
    rec.samples = static_cast<int>(t);
    rec.data.resize(static_cast<size_t>(c) * t);
    for (auto& v : rec.data) v = binio::read_raw<float>(is);
    rec.label_track.resize(t);
    for (auto& l : rec.label_track) l = binio::read_raw<uint8_t>(is);
    rec.validate();
    return rec;
}

EegRecording ingest(const std::string& path, const CsvFormat& fmt) {
    if (std::filesystem::path(path).extension() == ".csv") return ingest_csv(path, fmt);
    return ingest_binary(path);
}

// ---------------------------------------------------------------------------
// Synthesis
// ---------------------------------------------------------------------------

void SyntheticSpec::validate() const {
    if (channels.empty()) fail("synthetic spec: zero channels");
    if (!(seconds > 0.0)) fail("synthetic spec: zero duration");
    if (!(sample_rate_hz > 0.0)) fail("synthetic spec: sample rate must be positive");
    if (subjects < 1) fail("synthetic spec: need at least one subject");
    if (recordings_per_class < 1) fail("synthetic spec: need at least one recording per class");
    for (const auto& cls : classes)
        for (const auto& tone : cls.tones)
            if (!tone.channel_amps.empty() && tone.channel_amps.size() != channels.size())
                fail("synthetic spec: tone amp count does not match channel count");
}

SyntheticSpec default_synthetic_spec() {
    SyntheticSpec spec;
    spec.channels = {"TP9", "AF7", "AF8", "TP10"};
    spec.sample_rate_hz = 256.0;
    spec.seconds = 120.0;
    spec.subjects = 4;
    spec.recordings_per_class = 1;
    spec.noise_level = 0.5;
    spec.subject_gain_jitter = 0.2;
    // class 0: flat alpha, steady beta
    spec.classes[0].tones = {
        {10.0, {1.0, 1.0, 1.0, 1.0}, 0.0, 1.0},
        {20.0, {0.7, 0.7, 0.7, 0.7}, 0.0, 1.0},
        {6.0, {0.5, 0.5, 0.5, 0.5}, 0.0, 1.0},
    };
    // class 1: elevated frontal alpha (AF7/AF8), bursty beta with matched
    // average power so the difference lives in the time-frequency domain
    const double kBurstAmp = 0.7 * std::numbers::sqrt2;
    spec.classes[1].tones = {
        {10.0, {1.0, 2.0, 2.0, 1.0}, 0.0, 1.0},
        {20.0, {kBurstAmp, kBurstAmp, kBurstAmp, kBurstAmp}, 2.0, 0.5},
        {6.0, {0.5, 0.5, 0.5, 0.5}, 0.0, 1.0},
    };
    return spec;
}

std::vector<EegRecording> synthesize(const SyntheticSpec& spec, uint64_t seed) {
    spec.validate();
    const int T = static_cast<int>(std::llround(spec.seconds * spec.sample_rate_hz));
    if (T < 1) fail("synthetic spec: zero duration");
    const int C = static_cast<int>(spec.channels.size());

    std::vector<EegRecording> out;
    for (int s = 0; s < spec.subjects; ++s) {
        // subject identity: a stable per-channel gain profile
        std::mt19937_64 subj_rng(mix64(seed ^ mix64(0x5eed0000ull + static_cast<uint64_t>(s))));
        std::uniform_real_distribution<double> jit(-spec.subject_gain_jitter,
                                                   spec.subject_gain_jitter);
        std::vector<double> gain(static_cast<size_t>(C));
        for (auto& g : gain) g = 1.0 + jit(subj_rng);

        for (int cls = 0; cls < 2; ++cls) {
            for (int r = 0; r < spec.recordings_per_class; ++r) {
                std::mt19937_64 rng(mix64(seed ^ mix64((static_cast<uint64_t>(s) << 20) |
                                                       (static_cast<uint64_t>(cls) << 10) |
                                                       static_cast<uint64_t>(r))));
                std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
                std::normal_distribution<double> gauss(0.0, 1.0);

                const auto& tones = spec.classes[static_cast<size_t>(cls)].tones;
                std::vector<double> phases(tones.size());
                for (auto& p : phases) p = phase(rng);

                EegRecording rec;
                char sid[16];
                std::snprintf(sid, sizeof sid, "s%02d", s + 1);
                rec.subject_id = sid;
                rec.channels = spec.channels;
                rec.sample_rate_hz = spec.sample_rate_hz;
                rec.samples = T;
                rec.data.resize(static_cast<size_t>(C) * static_cast<size_t>(T));
                rec.label_track.assign(static_cast<size_t>(T),
                                       static_cast<uint8_t>(cls == 0 ? spec.low_score
                                                                     : spec.high_score));
                for (int t = 0; t < T; ++t) {
                    double time = t / spec.sample_rate_hz;
                    for (int ch = 0; ch < C; ++ch) {
                        double v = 0.0;
                        for (size_t k = 0; k < tones.size(); ++k) {
                            const auto& tone = tones[k];
                            double amp = tone.channel_amps.empty()
                                             ? 1.0
                                             : tone.channel_amps[static_cast<size_t>(ch)];
                            if (amp == 0.0) continue;
                            if (tone.burst_period_s > 0.0) {
                                double ph = std::fmod(time, tone.burst_period_s);
                                if (ph >= tone.burst_duty * tone.burst_period_s) continue;
                            }
                            v += amp * std::sin(2.0 * kPi * tone.freq_hz * time + phases[k]);
                        }
                        v *= gain[static_cast<size_t>(ch)];
                        if (spec.noise_level > 0.0) v += spec.noise_level * gauss(rng);
                        rec.data[static_cast<size_t>(ch) * static_cast<size_t>(T) +
                                 static_cast<size_t>(t)] = static_cast<float>(v);
                    }
                }
                rec.validate();
                out.push_back(std::move(rec));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Segmentation and labels
// ---------------------------------------------------------------------------

int binarize_label(int raw_score) {
    if (raw_score < 1 || raw_score > 9)
        throw std::invalid_argument("label score " + std::to_string(raw_score) +
                                    " outside the 1..9 scale");
    return raw_score <= 5 ? 0 : 1;
}

std::vector<Segment> segment(const EegRecording& rec, double window_seconds) {
    rec.validate();
    const int L = static_cast<int>(std::llround(window_seconds * rec.sample_rate_hz));
    if (L < 1) throw std::invalid_argument("segment: window shorter than one sample");
    const int n = rec.samples / L;
    std::vector<Segment> out;
    out.reserve(static_cast<size_t>(n));
    for (int w = 0; w < n; ++w) {
        Segment seg;
        seg.subject_id = rec.subject_id;
        seg.channels = rec.channel_count();
        seg.length = L;
        seg.sample_rate_hz = rec.sample_rate_hz;
        seg.data.resize(static_cast<size_t>(seg.channels) * static_cast<size_t>(L));
        for (int c = 0; c < seg.channels; ++c)
            for (int t = 0; t < L; ++t)
                seg.data[static_cast<size_t>(c) * static_cast<size_t>(L) + static_cast<size_t>(t)] =
                    rec.at(c, w * L + t);
        int raw = rec.label_track[static_cast<size_t>(w) * static_cast<size_t>(L)];
        seg.label = rec.prebinarized ? (raw != 0 ? 1 : 0) : binarize_label(raw);
        out.push_back(std::move(seg));
    }
    return out;
}

}  // namespace geega::sio
