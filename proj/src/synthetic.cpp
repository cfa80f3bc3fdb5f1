#include "optflow/eval.hpp"

#include "optflow/egomotion.hpp"
#include "optflow/knn.hpp"
#include "optflow/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

namespace optflow {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct Box {
    Vec3 center;
    Vec3 size;  // extent along the box's local x, y, z
    double yaw = 0.0;
};

struct Rect {
    Vec3 origin;
    Vec3 u;  // edge vectors spanning the rectangle
    Vec3 v;
};

struct Cylinder {
    Vec3 base;
    double radius;
    double height;
};

Mat3 yaw_matrix(double yaw) { return rodrigues(Vec3(0.0, 0.0, yaw)); }

Vec3 sample_rect(const Rect& r, Rng& rng) { return r.origin + rng.uniform() * r.u + rng.uniform() * r.v; }

// Five visible faces; the underside is never sampled.
Vec3 sample_box(const Box& box, Rng& rng) {
    const double sx = box.size.x();
    const double sy = box.size.y();
    const double sz = box.size.z();
    const std::array<double, 5> area{sx * sy, sy * sz, sy * sz, sx * sz, sx * sz};
    double pick = rng.uniform() * (area[0] + area[1] + area[2] + area[3] + area[4]);
    int face = 0;
    while (face < 4 && pick >= area[face]) pick -= area[face++];
    const double a = rng.uniform() - 0.5;
    const double b = rng.uniform() - 0.5;
    Vec3 local;
    switch (face) {
        case 0: local = {a * sx, b * sy, 0.5 * sz}; break;
        case 1: local = {0.5 * sx, a * sy, b * sz}; break;
        case 2: local = {-0.5 * sx, a * sy, b * sz}; break;
        case 3: local = {a * sx, 0.5 * sy, b * sz}; break;
        default: local = {a * sx, -0.5 * sy, b * sz}; break;
    }
    return box.center + yaw_matrix(box.yaw) * local;
}

Vec3 sample_cylinder(const Cylinder& c, Rng& rng) {
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    return c.base + Vec3(c.radius * std::cos(angle), c.radius * std::sin(angle), rng.uniform(0.0, c.height));
}

struct DynamicBox {
    Box box;
    Vec3 heading;
};

struct Layout {
    std::vector<Rect> walls;
    std::vector<Cylinder> poles;
    std::vector<Box> parked;
    std::vector<DynamicBox> movers;
};

Layout make_layout(std::size_t object_count, Rng& rng) {
    Layout layout;
    // Street canyon: two facades and a closing wall ahead of the sensor.
    layout.walls.push_back({{-10.0, 9.0, 0.0}, {40.0, 0.0, 0.0}, {0.0, 0.0, 6.0}});
    layout.walls.push_back({{-10.0, -9.0, 0.0}, {40.0, 0.0, 0.0}, {0.0, 0.0, 6.0}});
    layout.walls.push_back({{30.0, -9.0, 0.0}, {0.0, 18.0, 0.0}, {0.0, 0.0, 6.0}});

    for (int i = 0; i < 8; ++i) {
        const double side = i % 2 == 0 ? 1.0 : -1.0;
        layout.poles.push_back({{rng.uniform(-8.0, 28.0), side * rng.uniform(6.5, 7.5), 0.0}, 0.15, 4.0});
    }
    for (int i = 0; i < 4; ++i) {
        const double side = i % 2 == 0 ? 1.0 : -1.0;
        const Vec3 size(rng.uniform(1.0, 2.5), rng.uniform(1.0, 2.0), rng.uniform(1.0, 2.0));
        layout.parked.push_back(
            {{rng.uniform(-6.0, 26.0), side * rng.uniform(6.0, 7.5), 0.5 * size.z()}, size, rng.uniform(-0.3, 0.3)});
    }

    for (std::size_t k = 0; k < object_count; ++k) {
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            const double heading_yaw = (rng.uniform() < 0.5 ? 0.0 : std::numbers::pi) + rng.uniform(-10.0, 10.0) * kDeg;
            const Vec3 center(rng.uniform(2.0, 22.0), rng.uniform(-2.0, 2.0), 0.95);
            bool clear = true;
            for (const auto& other : layout.movers) {
                if ((other.box.center - center).head<2>().norm() < 7.5) clear = false;
            }
            if (!clear) continue;
            layout.movers.push_back({{center, {4.2, 1.8, 1.5}, heading_yaw},
                                     {std::cos(heading_yaw), std::sin(heading_yaw), 0.0}});
            placed = true;
        }
        if (!placed) {
            throw Error(ErrorCode::InvalidConfig, "could not place " + std::to_string(object_count) + " objects");
        }
    }
    return layout;
}

void validate(const SceneConfig& c) {
    auto bad = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); };
    if (c.source_points < 10) bad("source_points must be >= 10");
    if (c.object_count > 4) bad("object_count must be <= 4");
    if (!std::isfinite(c.noise_sigma) || c.noise_sigma < 0.0) bad("noise_sigma must be >= 0");
    if (!(c.drop_fraction >= 0.0 && c.drop_fraction <= 0.5)) bad("drop_fraction must be in [0, 0.5]");
    if (!std::isfinite(c.ego_yaw_deg) || !c.ego_translation.allFinite() || !std::isfinite(c.object_displacement) ||
        !std::isfinite(c.object_yaw_deg)) {
        bad("motion parameters must be finite");
    }
}

// Source samples plus, per point, the mover it belongs to (-1 for static).
struct Sampled {
    std::vector<Vec3> points;
    std::vector<int> owner;
};

Sampled sample_scene(const SceneConfig& c, const Layout& layout, Rng& rng) {
    const std::size_t n = c.source_points;
    const std::size_t per_mover = n / 10;
    const std::size_t poles = n * 8 / 100;
    const std::size_t parked = n * 17 / 100;
    const std::size_t walls = n - poles - parked - per_mover * layout.movers.size();

    Sampled s;
    s.points.reserve(n);
    s.owner.reserve(n);
    double wall_area = 0.0;
    for (const auto& w : layout.walls) wall_area += w.u.cross(w.v).norm();
    for (std::size_t i = 0; i < walls; ++i) {
        double pick = rng.uniform() * wall_area;
        std::size_t k = 0;
        while (k + 1 < layout.walls.size() && pick >= layout.walls[k].u.cross(layout.walls[k].v).norm()) {
            pick -= layout.walls[k].u.cross(layout.walls[k].v).norm();
            ++k;
        }
        s.points.push_back(sample_rect(layout.walls[k], rng));
        s.owner.push_back(-1);
    }
    for (std::size_t i = 0; i < poles; ++i) {
        s.points.push_back(sample_cylinder(layout.poles[rng.below(layout.poles.size())], rng));
        s.owner.push_back(-1);
    }
    for (std::size_t i = 0; i < parked; ++i) {
        s.points.push_back(sample_box(layout.parked[rng.below(layout.parked.size())], rng));
        s.owner.push_back(-1);
    }
    for (std::size_t m = 0; m < layout.movers.size(); ++m) {
        for (std::size_t i = 0; i < per_mover; ++i) {
            s.points.push_back(sample_box(layout.movers[m].box, rng));
            s.owner.push_back(static_cast<int>(m));
        }
    }
    return s;
}

// Advances every point by one frame: movers first in the current frame, then
// the ego-motion applied to everything. Updates the movers for the next frame.
std::vector<Vec3> advance(const std::vector<Vec3>& points, const std::vector<int>& owner,
                          std::vector<DynamicBox>& movers, const SceneConfig& c, const RigidMotion& ego) {
    const Mat3 ego_rot = rodrigues(ego.r);
    const Mat3 spin = yaw_matrix(c.object_yaw_deg * kDeg);
    std::vector<Vec3> out(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        Vec3 p = points[i];
        if (owner[i] >= 0) {
            const auto& m = movers[static_cast<std::size_t>(owner[i])];
            const Vec3 offset = (spin - Mat3::Identity()) * (p - m.box.center) + c.object_displacement * m.heading;
            p += offset;
        }
        out[i] = ego_rot * p + ego.t;
    }
    for (auto& m : movers) {
        m.box.center = ego_rot * (m.box.center + c.object_displacement * m.heading) + ego.t;
        m.heading = ego_rot * spin * m.heading;
    }
    return out;
}

Vec3 bounded_noise(double sigma, Rng& rng) {
    if (sigma == 0.0) return Vec3::Zero();
    for (;;) {
        const Vec3 e(rng.normal(), rng.normal(), rng.normal());
        if (e.norm() <= 6.0) return sigma * e;
    }
}

// Removes `fraction` of the points in spatially coherent patches.
std::vector<std::uint8_t> drop_patches(const std::vector<Vec3>& points, double fraction, Rng& rng) {
    std::vector<std::uint8_t> keep(points.size(), 1);
    const auto target_drop = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(points.size())));
    if (target_drop == 0) return keep;
    const SpatialIndex index(points);
    constexpr std::size_t kPatch = 40;
    std::size_t dropped = 0;
    std::vector<Neighbor> found;
    while (dropped < target_drop) {
        const std::size_t center = rng.below(points.size());
        if (!keep[center]) continue;
        index.query(points[center], kPatch, kUnbounded, found);
        for (const auto& nb : found) {
            if (dropped == target_drop) break;
            if (keep[nb.index]) {
                keep[nb.index] = 0;
                ++dropped;
            }
        }
    }
    return keep;
}

RigidMotion ego_of(const SceneConfig& c) { return {Vec3(0.0, 0.0, c.ego_yaw_deg * kDeg), c.ego_translation}; }

}  // namespace

SyntheticScene gen_scene(const SceneConfig& config, std::uint64_t seed) {
    validate(config);
    Rng rng(seed);
    Layout layout = make_layout(config.object_count, rng);
    const Sampled sampled = sample_scene(config, layout, rng);

    SyntheticScene scene;
    scene.config = config;
    scene.seed = seed;
    scene.gt_motion = ego_of(config);
    scene.source = PointCloud(sampled.points);
    const auto moved = advance(sampled.points, sampled.owner, layout.movers, config, scene.gt_motion);

    const std::size_t n = sampled.points.size();
    scene.gt_flow = FlowField::zeros(n);
    scene.dynamic_mask.assign(n, 0);
    const bool objects_move = config.object_displacement != 0.0 || config.object_yaw_deg != 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        scene.gt_flow[i] = moved[i] - sampled.points[i];
        scene.dynamic_mask[i] = (objects_move && sampled.owner[i] >= 0) ? 1 : 0;
    }
    const auto keep = drop_patches(moved, config.drop_fraction, rng);
    for (std::size_t i = 0; i < n; ++i) {
        if (keep[i]) scene.target.points.push_back(moved[i] + bounded_noise(config.noise_sigma, rng));
    }
    return scene;
}

SyntheticSequence gen_sequence(const SceneConfig& config, std::size_t frames, std::uint64_t seed) {
    validate(config);
    if (frames < 2) throw Error(ErrorCode::InvalidConfig, "a sequence needs at least two frames");
    Rng rng(seed);
    Layout layout = make_layout(config.object_count, rng);
    const Sampled sampled = sample_scene(config, layout, rng);

    SyntheticSequence seq;
    seq.config = config;
    seq.seed = seed;
    seq.gt_motion = ego_of(config);
    const bool objects_move = config.object_displacement != 0.0 || config.object_yaw_deg != 0.0;
    seq.dynamic_mask.resize(sampled.owner.size());
    for (std::size_t i = 0; i < sampled.owner.size(); ++i) {
        seq.dynamic_mask[i] = (objects_move && sampled.owner[i] >= 0) ? 1 : 0;
    }

    std::vector<std::vector<Vec3>> clean{sampled.points};
    for (std::size_t f = 1; f < frames; ++f) {
        clean.push_back(advance(clean.back(), sampled.owner, layout.movers, config, seq.gt_motion));
    }
    for (std::size_t f = 0; f < frames; ++f) {
        PointCloud cloud;
        cloud.points.reserve(clean[f].size());
        for (const auto& p : clean[f]) cloud.points.push_back(p + bounded_noise(config.noise_sigma, rng));
        seq.clouds.push_back(std::move(cloud));
        if (f + 1 < frames) {
            FlowField gt = FlowField::zeros(clean[f].size());
            for (std::size_t i = 0; i < clean[f].size(); ++i) gt[i] = clean[f + 1][i] - clean[f][i];
            seq.gt_flows.push_back(std::move(gt));
        }
    }
    return seq;
}

SceneConfig scene_preset(std::string_view name) {
    SceneConfig c;
    if (name == "static_world") {
        c.ego_yaw_deg = 0.0;
        c.ego_translation = Vec3::Zero();
        c.object_displacement = 0.0;
    } else if (name == "ego_only") {
        c.object_displacement = 0.0;
    } else if (name == "ego_plus_objects" || name == "sequence5") {
        // defaults
    } else if (name == "occluded") {
        c.drop_fraction = 0.3;
    } else {
        throw Error(ErrorCode::InvalidConfig, "unknown preset '" + std::string(name) + "'");
    }
    return c;
}

std::vector<std::string_view> scene_preset_names() {
    return {"static_world", "ego_only", "ego_plus_objects", "occluded", "sequence5"};
}

}  // namespace optflow
