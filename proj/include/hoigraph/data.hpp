#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hoigraph/common.hpp"

namespace hoigraph {

struct Box {
    double x = 0, y = 0, w = 0, h = 0;  // top-left corner + extents, pixels
};

struct InstanceTrack {
    int class_id = 0;
    bool is_human = false;
    int affordance = -1;     // -1 encodes "no label" (serialized as null)
    std::vector<Box> boxes;  // one per frame, full tracks only
    std::vector<std::vector<double>> visual;  // optional; one d_raw vector per frame
};

struct VideoSample {
    std::string video_id;
    int width = 0, height = 0;
    int activity = 0;
    std::vector<InstanceTrack> instances;

    std::size_t frames() const {
        return instances.empty() ? 0 : instances[0].boxes.size();
    }
    std::size_t human_index() const {
        for (std::size_t m = 0; m < instances.size(); ++m)
            if (instances[m].is_human) return m;
        throw DataError("video '" + video_id + "' has no human track");
    }
};

// ---------------------------------------------------------------------------
// Tracklet JSON

inline void validate_sample(const VideoSample& s) {
    if (s.width <= 0 || s.height <= 0) {
        throw DataError("video '" + s.video_id + "' has non-positive image dims");
    }
    if (s.instances.size() < 2) {
        throw DataError("video '" + s.video_id + "' needs at least two instances, got " +
                        std::to_string(s.instances.size()));
    }
    std::size_t humans = 0;
    for (const auto& tr : s.instances) humans += tr.is_human ? 1 : 0;
    if (humans == 0) throw DataError("video '" + s.video_id + "' has no human track");
    if (humans > 1) throw DataError("video '" + s.video_id + "' has a duplicate human track");
    std::size_t L = s.instances[0].boxes.size();
    if (L == 0) throw DataError("video '" + s.video_id + "' has zero frames");
    for (std::size_t m = 0; m < s.instances.size(); ++m) {
        std::size_t have = s.instances[m].boxes.size();
        if (have != L) {
            throw DataError("video '" + s.video_id + "', instance " + std::to_string(m) +
                            ": missing box at frame " + std::to_string(std::min(have, L)) +
                            " (track has " + std::to_string(have) + " of " +
                            std::to_string(L) + " frames)");
        }
        if (!s.instances[m].visual.empty() && s.instances[m].visual.size() != L) {
            throw DataError("video '" + s.video_id + "', instance " + std::to_string(m) +
                            ": visual features cover " +
                            std::to_string(s.instances[m].visual.size()) + " of " +
                            std::to_string(L) + " frames");
        }
    }
}

inline VideoSample sample_from_json(const nlohmann::json& j) {
    VideoSample s;
    try {
        s.video_id = j.at("video_id").get<std::string>();
        s.width = j.at("width").get<int>();
        s.height = j.at("height").get<int>();
        s.activity = j.at("activity").get<int>();
        for (std::size_t m = 0; m < j.at("instances").size(); ++m) {
            const auto& ji = j.at("instances")[m];
            InstanceTrack tr;
            tr.class_id = ji.at("class_id").get<int>();
            tr.is_human = ji.at("is_human").get<bool>();
            const auto& aff = ji.at("affordance");
            tr.affordance = aff.is_null() ? -1 : aff.get<int>();
            const auto& boxes = ji.at("boxes");
            for (std::size_t t = 0; t < boxes.size(); ++t) {
                const auto& jb = boxes[t];
                if (jb.is_null() || !jb.is_array() || jb.size() != 4) {
                    throw DataError("video '" + s.video_id + "', instance " +
                                    std::to_string(m) + ": missing box at frame " +
                                    std::to_string(t));
                }
                tr.boxes.push_back(
                    {jb[0].get<double>(), jb[1].get<double>(), jb[2].get<double>(),
                     jb[3].get<double>()});
            }
            s.instances.push_back(std::move(tr));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed tracklet record: ") + e.what());
    }
    validate_sample(s);
    return s;
}

inline nlohmann::json sample_to_json(const VideoSample& s) {
    nlohmann::json j;
    j["video_id"] = s.video_id;
    j["width"] = s.width;
    j["height"] = s.height;
    j["activity"] = s.activity;
    j["instances"] = nlohmann::json::array();
    for (const auto& tr : s.instances) {
        nlohmann::json ji;
        ji["class_id"] = tr.class_id;
        ji["is_human"] = tr.is_human;
        if (tr.affordance < 0) {
            ji["affordance"] = nullptr;
        } else {
            ji["affordance"] = tr.affordance;
        }
        ji["boxes"] = nlohmann::json::array();
        for (const auto& b : tr.boxes) {
            ji["boxes"].push_back({b.x, b.y, b.w, b.h});
        }
        j["instances"].push_back(std::move(ji));
    }
    return j;
}

inline std::vector<VideoSample> parse_dataset(const std::string& text) {
    // Whitespace-only input is an empty dataset, matching an empty file.
    bool blank = true;
    for (char c : text)
        if (!std::isspace(static_cast<unsigned char>(c))) { blank = false; break; }
    if (blank) return {};
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("dataset is not valid JSON: ") + e.what());
    }
    if (!j.is_array()) throw DataError("dataset file must hold a JSON array of samples");
    std::vector<VideoSample> out;
    out.reserve(j.size());
    for (const auto& js : j) out.push_back(sample_from_json(js));
    return out;
}

inline std::vector<VideoSample> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_dataset(buf.str());
}

inline void save_dataset(const std::string& path, const std::vector<VideoSample>& samples) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& s : samples) j.push_back(sample_to_json(s));
    std::ofstream out(path);
    if (!out) throw DataError("cannot write dataset file: " + path);
    out << j.dump(1) << "\n";
}

// ---------------------------------------------------------------------------
// Visual feature sidecar: {"d_raw": D, "videos": {video_id: [frame][instance] -> vector}}

struct VisualFeatureFile {
    int d_raw = 0;
    std::map<std::string, std::vector<std::vector<std::vector<double>>>> videos;
};

inline VisualFeatureFile load_visual_features(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open visual feature file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("visual feature file is not valid JSON: ") + e.what());
    }
    VisualFeatureFile f;
    try {
        f.d_raw = j.at("d_raw").get<int>();
        for (const auto& [vid, frames] : j.at("videos").items()) {
            auto& dst = f.videos[vid];
            for (const auto& frame : frames) {
                std::vector<std::vector<double>> row;
                for (const auto& vec : frame) row.push_back(vec.get<std::vector<double>>());
                dst.push_back(std::move(row));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed visual feature file: ") + e.what());
    }
    if (f.d_raw <= 0) throw DataError("visual feature file declares non-positive d_raw");
    for (const auto& [vid, frames] : f.videos)
        for (std::size_t t = 0; t < frames.size(); ++t)
            for (std::size_t m = 0; m < frames[t].size(); ++m)
                if (frames[t][m].size() != static_cast<std::size_t>(f.d_raw)) {
                    throw DataError("visual feature file: video '" + vid + "' frame " +
                                    std::to_string(t) + " instance " + std::to_string(m) +
                                    " has dimension " + std::to_string(frames[t][m].size()) +
                                    ", header says " + std::to_string(f.d_raw));
                }
    return f;
}

inline void save_visual_features(const std::string& path,
                                 const std::vector<VideoSample>& samples, int d_raw) {
    nlohmann::json videos = nlohmann::json::object();
    for (const auto& s : samples) {
        nlohmann::json frames = nlohmann::json::array();
        for (std::size_t t = 0; t < s.frames(); ++t) {
            nlohmann::json per_instance = nlohmann::json::array();
            for (const auto& tr : s.instances) {
                if (tr.visual.size() != s.frames()) {
                    throw DataError("video '" + s.video_id +
                                    "' lacks visual features; nothing to save");
                }
                per_instance.push_back(tr.visual[t]);
            }
            frames.push_back(std::move(per_instance));
        }
        videos[s.video_id] = std::move(frames);
    }
    nlohmann::json j;
    j["d_raw"] = d_raw;
    j["videos"] = std::move(videos);
    std::ofstream out(path);
    if (!out) throw DataError("cannot write visual feature file: " + path);
    out << j.dump(1) << "\n";
}

// Fills each track's visual vectors from a sidecar file, validating coverage.
inline void attach_visual(std::vector<VideoSample>& samples, const VisualFeatureFile& f) {
    for (auto& s : samples) {
        auto it = f.videos.find(s.video_id);
        if (it == f.videos.end()) {
            throw DataError("visual feature file lacks video '" + s.video_id + "'");
        }
        const auto& frames = it->second;
        if (frames.size() != s.frames()) {
            throw DataError("video '" + s.video_id + "': visual file covers " +
                            std::to_string(frames.size()) + " frames, tracklets have " +
                            std::to_string(s.frames()));
        }
        for (std::size_t t = 0; t < frames.size(); ++t) {
            if (frames[t].size() != s.instances.size()) {
                throw DataError("video '" + s.video_id + "': visual entry missing at (t=" +
                                std::to_string(t) + ", m=" +
                                std::to_string(frames[t].size()) + ")");
            }
        }
        for (std::size_t m = 0; m < s.instances.size(); ++m) {
            auto& vis = s.instances[m].visual;
            vis.assign(s.frames(), {});
            for (std::size_t t = 0; t < s.frames(); ++t) vis[t] = frames[t][m];
        }
    }
}

// ---------------------------------------------------------------------------
// Frame sampling

// Picks indices floor(i*L/T); repeats indices when L < T.
inline std::vector<std::size_t> uniform_frame_indices(std::size_t L, std::size_t T) {
    if (L == 0) throw ContractError("uniform_frame_indices: empty clip");
    if (T == 0) throw ContractError("uniform_frame_indices: zero target frames");
    std::vector<std::size_t> idx(T);
    for (std::size_t i = 0; i < T; ++i) idx[i] = (i * L) / T;
    return idx;
}

inline VideoSample uniform_sample_frames(const VideoSample& s, std::size_t T) {
    std::vector<std::size_t> idx = uniform_frame_indices(s.frames(), T);
    VideoSample out = s;
    for (auto& tr : out.instances) {
        std::vector<Box> boxes(T);
        for (std::size_t i = 0; i < T; ++i) boxes[i] = tr.boxes[idx[i]];
        tr.boxes = std::move(boxes);
        if (!tr.visual.empty()) {
            std::vector<std::vector<double>> vis(T);
            for (std::size_t i = 0; i < T; ++i) vis[i] = tr.visual[idx[i]];
            tr.visual = std::move(vis);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stratified split

inline std::pair<std::vector<VideoSample>, std::vector<VideoSample>> dataset_split(
    const std::vector<VideoSample>& dataset, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw ConfigError("split ratio must lie strictly between 0 and 1, got " +
                          std::to_string(ratio));
    }
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < dataset.size(); ++i)
        by_class[dataset[i].activity].push_back(i);

    std::vector<std::size_t> train_idx, test_idx;
    for (auto& [cls, idx] : by_class) {
        if (idx.size() < 2) {
            throw DataError("cannot stratify: class " + std::to_string(cls) + " has only " +
                            std::to_string(idx.size()) + " sample(s)");
        }
        Rng rng(hash_combine(seed, static_cast<std::uint64_t>(cls)));
        rng.shuffle(idx);
        auto n_train = static_cast<std::size_t>(ratio * static_cast<double>(idx.size()));
        n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
        train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + n_train);
        test_idx.insert(test_idx.end(), idx.begin() + n_train, idx.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());

    std::pair<std::vector<VideoSample>, std::vector<VideoSample>> out;
    for (std::size_t i : train_idx) out.first.push_back(dataset[i]);
    for (std::size_t i : test_idx) out.second.push_back(dataset[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic scene generator

// Motion classes and affordance labels. The "ordering" task swaps the roster
// for two classes that share identical motion statistics and differ only in
// when the motion happens.
enum MotionClass : int { kIdle = 0, kReach = 1, kMove = 2, kPlace = 3 };
enum Affordance : int {
    kStationary = 0,
    kReachable = 1,
    kMovable = 2,
    kPlaceable = 3
};
enum class SynthTask { motion, ordering };

struct SyntheticConfig {
    SynthTask task = SynthTask::motion;
    int samples_per_class = 50;
    std::uint64_t seed = 0;
    int k_min = 2, k_max = 3;  // objects per scene
    int width = 640, height = 480;
    int len_min = 20, len_max = 32;
    double box_jitter = 1.5;    // Gaussian sigma, pixels, applied to every box
    int d_raw = 64;             // synthetic visual feature dimension
    double visual_noise = 0.1;  // per-frame sigma around the class prototype
    int semantic_classes = 6;   // class 0 = hand; objects draw from 1..semantic_classes-1
};

inline int synth_activity_classes(SynthTask task) {
    return task == SynthTask::motion ? 4 : 2;
}
inline constexpr int kAffordanceClasses = 4;

inline const char* synth_class_name(SynthTask task, int cls) {
    static const char* motion[] = {"idle", "reach", "move", "place"};
    static const char* ordering[] = {"move_stop", "stop_move"};
    return task == SynthTask::motion ? motion[cls] : ordering[cls];
}

namespace detail {

struct Point {
    double x = 0, y = 0;
};

inline double dist(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace detail

// Builds one scene per (class, index) pair from an isolated RNG stream, so
// any single sample can be regenerated without replaying the whole dataset.
inline VideoSample synth_scene(const SyntheticConfig& cfg, int cls, int index) {
    using detail::Point;
    Rng rng(hash_combine(cfg.seed, hash_combine(static_cast<std::uint64_t>(cls),
                                                static_cast<std::uint64_t>(index))));
    const double W = cfg.width, H = cfg.height;
    const double margin = 90.0;
    const std::size_t L =
        static_cast<std::size_t>(cfg.len_min) +
        rng.below(static_cast<std::uint64_t>(cfg.len_max - cfg.len_min + 1));
    const int K = cfg.k_min + static_cast<int>(rng.below(
                                  static_cast<std::uint64_t>(cfg.k_max - cfg.k_min + 1)));
    const int target = static_cast<int>(rng.below(static_cast<std::uint64_t>(K)));
    const int human_pos = static_cast<int>(rng.below(static_cast<std::uint64_t>(K) + 1));

    // Static resting spots on a fixed ellipse, lightly jittered. Near-canonical
    // placement keeps the static geometry uninformative: with a few hundred
    // training clips, louder layout variety becomes a memorization key that
    // drowns out the motion signal the classes are actually built from.
    std::vector<Point> spots;
    for (int k = 0; k <= K; ++k) {
        double ang = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(K + 1);
        Point p{W / 2.0 + 150.0 * std::cos(ang) + rng.normal(0.0, 10.0),
                H / 2.0 + 110.0 * std::sin(ang) + rng.normal(0.0, 10.0)};
        p.x = std::clamp(p.x, margin, W - margin);
        p.y = std::clamp(p.y, margin, H - margin);
        spots.push_back(p);
    }

    // Per-instance center trajectories. Index 0 is the hand, 1..K the objects;
    // the hand is spliced into its random slot at the end.
    std::vector<std::vector<Point>> path(static_cast<std::size_t>(K) + 1,
                                         std::vector<Point>(L));
    for (int k = 0; k < K; ++k)
        for (std::size_t t = 0; t < L; ++t) path[static_cast<std::size_t>(k) + 1][t] = spots[static_cast<std::size_t>(k) + 1];

    auto& hand = path[0];
    auto& tgt = path[static_cast<std::size_t>(target) + 1];

    bool ordering = cfg.task == SynthTask::ordering;
    if (!ordering && cls == kIdle) {
        for (std::size_t t = 0; t < L; ++t) hand[t] = spots[0];
    } else if (!ordering && cls == kReach) {
        // Hand travels to the target by 85% of the clip, then rests on it;
        // contact nudges the target a few pixels along the approach direction.
        Point goal = tgt[0];
        Point start = spots[0];
        if (detail::dist(start, goal) < 160.0) {
            // too close for a readable approach; push the start away
            double ang = std::atan2(start.y - goal.y, start.x - goal.x);
            start = {goal.x + 200.0 * std::cos(ang), goal.y + 200.0 * std::sin(ang)};
            start.x = std::clamp(start.x, margin, W - margin);
            start.y = std::clamp(start.y, margin, H - margin);
        }
        std::size_t arrive = (L * 17) / 20;
        if (arrive < 2) arrive = 2;
        for (std::size_t t = 0; t < L; ++t) {
            double u = t < arrive ? static_cast<double>(t) / static_cast<double>(arrive)
                                  : 1.0;
            hand[t] = {start.x + u * (goal.x - start.x), start.y + u * (goal.y - start.y)};
        }
        double ang = std::atan2(goal.y - start.y, goal.x - start.x);
        Point nudge{2.5 * std::cos(ang), 2.5 * std::sin(ang)};
        for (std::size_t t = arrive; t < L; ++t) {
            double steps = static_cast<double>(t - arrive + 1);
            tgt[t] = {std::clamp(tgt[0].x + steps * nudge.x, margin, W - margin),
                      std::clamp(tgt[0].y + steps * nudge.y, margin, H - margin)};
        }
    } else {
        // Joint hand+target translation, with a class-specific motion window:
        //   move:       full clip
        //   place:      first 40-60%, then the target halts and the hand, after
        //               a short withdrawal, rests beside it
        //   move_stop:  first half, both halt
        //   stop_move:  second half
        // The carried path starts at the target's own resting spot and heads in
        // a direction whose full extent stays on the canvas.
        const double fit = margin + 30.0;
        double step = rng.uniform(4.0, 7.0);
        Point t0 = spots[static_cast<std::size_t>(target) + 1];
        Point d{0.0, 0.0};
        for (int tries = 0;; ++tries) {
            double ang = rng.uniform(0.0, 2.0 * M_PI);
            d = {step * std::cos(ang), step * std::sin(ang)};
            double ex = t0.x + d.x * static_cast<double>(L - 1);
            double ey = t0.y + d.y * static_cast<double>(L - 1);
            if (ex >= fit && ex <= W - fit && ey >= fit && ey <= H - fit) break;
            if (tries == 127)
                throw ContractError("synthetic path does not fit the canvas; shrink step or clip");
        }
        Point offset{rng.uniform(-25.0, 25.0), rng.uniform(-25.0, 25.0)};
        std::size_t halt = L;  // first frame with no motion; L = moves to the end
        std::size_t begin_motion = 0;
        if (!ordering && cls == kPlace) {
            halt = static_cast<std::size_t>(static_cast<double>(L) * rng.uniform(0.4, 0.6));
        } else if (ordering && cls == 0) {  // move_stop
            halt = L / 2;
        } else if (ordering && cls == 1) {  // stop_move
            begin_motion = L / 2;
        }
        std::size_t moving_frames = (halt > begin_motion ? halt - begin_motion : 0);
        Point cur = t0;
        for (std::size_t t = 0; t < L; ++t) {
            if (t > begin_motion && t <= begin_motion + moving_frames) {
                cur = {cur.x + d.x, cur.y + d.y};
            }
            tgt[t] = cur;
        }
        // The hand mirrors the target while carrying; after a place-halt it
        // withdraws a few frames along d (released the object) and then rests,
        // so every class leaves a distinct stop-time in the hand track alone.
        Point hcur{t0.x + offset.x, t0.y + offset.y};
        std::size_t withdraw = std::max<std::size_t>(2, (L * 3) / 20);
        for (std::size_t t = 0; t < L; ++t) {
            bool carried = t > begin_motion && t <= begin_motion + moving_frames;
            bool walk_on =
                !ordering && cls == kPlace && t > halt && t <= halt + withdraw;
            if (carried || walk_on) hcur = {hcur.x + d.x, hcur.y + d.y};
            hand[t] = {std::clamp(hcur.x, 20.0, W - 20.0),
                       std::clamp(hcur.y, 20.0, H - 20.0)};
        }
    }

    // Affordance labels: the target carries the class-matching label, the
    // rest sit at "stationary"; idle scenes have no interacting target.
    int target_affordance = kStationary;
    if (ordering) {
        target_affordance = kMovable;
    } else if (cls == kReach) {
        target_affordance = kReachable;
    } else if (cls == kMove) {
        target_affordance = kMovable;
    } else if (cls == kPlace) {
        target_affordance = kPlaceable;
    }

    // Box extents, class prototypes, jitter, and assembly.
    VideoSample s;
    s.video_id = std::string("synth-") + synth_class_name(cfg.task, cls) + "-" +
                 std::to_string(index);
    s.width = cfg.width;
    s.height = cfg.height;
    s.activity = cls;

    auto prototype = [&cfg](int class_id) {
        Rng prng(hash_combine(cfg.seed,
                              hash_combine(fnv1a("proto"),
                                           static_cast<std::uint64_t>(class_id))));
        std::vector<double> v(static_cast<std::size_t>(cfg.d_raw));
        for (auto& x : v) x = prng.normal();
        return v;
    };

    std::vector<InstanceTrack> tracks;
    for (int k = 0; k <= K; ++k) {
        InstanceTrack tr;
        bool is_hand = k == 0;
        tr.is_human = is_hand;
        tr.class_id =
            is_hand ? 0
                    : 1 + static_cast<int>(rng.below(
                              static_cast<std::uint64_t>(cfg.semantic_classes - 1)));
        tr.affordance = is_hand ? -1
                                : (k - 1 == target ? target_affordance : kStationary);
        double bw = is_hand ? rng.uniform(30, 50) : rng.uniform(30, 80);
        double bh = is_hand ? rng.uniform(30, 50) : rng.uniform(30, 80);
        std::vector<double> proto = prototype(tr.class_id);
        for (std::size_t t = 0; t < L; ++t) {
            Point c = path[static_cast<std::size_t>(k)][t];
            double jx = rng.normal(0.0, cfg.box_jitter);
            double jy = rng.normal(0.0, cfg.box_jitter);
            Box b{c.x - bw / 2 + jx, c.y - bh / 2 + jy, bw, bh};
            b.x = std::clamp(b.x, 0.0, W - bw);
            b.y = std::clamp(b.y, 0.0, H - bh);
            tr.boxes.push_back(b);
            std::vector<double> feat = proto;
            for (auto& x : feat) x += rng.normal(0.0, cfg.visual_noise);
            tr.visual.push_back(std::move(feat));
        }
        tracks.push_back(std::move(tr));
    }
    // Splice the hand into its randomized slot so nothing can key on index 0.
    InstanceTrack hand_track = std::move(tracks[0]);
    tracks.erase(tracks.begin());
    tracks.insert(tracks.begin() + human_pos, std::move(hand_track));
    s.instances = std::move(tracks);

    validate_sample(s);
    return s;
}

inline std::vector<VideoSample> synth_generate(const SyntheticConfig& cfg) {
    if (cfg.samples_per_class <= 0 || cfg.k_min < 1 || cfg.k_max < cfg.k_min ||
        cfg.len_min < 2 || cfg.len_max < cfg.len_min || cfg.d_raw <= 0 ||
        cfg.semantic_classes < 2) {
        throw ConfigError("synthetic config out of range");
    }
    std::vector<VideoSample> out;
    for (int cls = 0; cls < synth_activity_classes(cfg.task); ++cls)
        for (int i = 0; i < cfg.samples_per_class; ++i)
            out.push_back(synth_scene(cfg, cls, i));
    return out;
}

}  // namespace hoigraph
