#include "regcl/dataset.hpp"

#include "regcl/errors.hpp"
#include "regcl/rng.hpp"

#include <cmath>

namespace regcl {

const char* to_string(DomainFamily f) {
    return f == DomainFamily::linear_teacher ? "linear_teacher" : "toy_segmentation";
}

const char* to_string(ShapeType s) {
    switch (s) {
        case ShapeType::disk: return "disk";
        case ShapeType::square: return "square";
        case ShapeType::ring: return "ring";
        case ShapeType::ellipse: return "ellipse";
        case ShapeType::cross: return "cross";
    }
    return "disk";
}

const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }

DomainFamily parse_domain_family(const std::string& s) {
    if (s == "linear_teacher") return DomainFamily::linear_teacher;
    if (s == "toy_segmentation") return DomainFamily::toy_segmentation;
    throw ValidationError("unknown domain family '" + s + "' (expected linear_teacher|toy_segmentation)");
}

ShapeType parse_shape_type(const std::string& s) {
    for (ShapeType t : {ShapeType::disk, ShapeType::square, ShapeType::ring, ShapeType::ellipse, ShapeType::cross})
        if (s == to_string(t)) return t;
    throw ValidationError("unknown shape type '" + s + "'");
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    throw ValidationError("unknown split '" + s + "'");
}

void DomainSpec::validate() const {
    if (name.empty()) throw ValidationError("domain name must not be empty");
    if (family == DomainFamily::toy_segmentation) {
        const auto& p = segmentation;
        if (p.grid < 4) throw ValidationError("segmentation grid must be at least 4");
        if (!(p.noise_sigma >= 0.0) || !(p.contrast > 0.0)) throw ValidationError("noise must be >= 0, contrast > 0");
        if (!(p.min_radius > 0.0 && p.min_radius <= p.max_radius && p.max_radius <= 0.5))
            throw ValidationError("shape radius range must satisfy 0 < min <= max <= 0.5");
        if (p.foreground == p.background) throw ValidationError("foreground and background intensity must differ");
    } else {
        const auto& p = linear;
        if (p.input_dim == 0 || p.output_dim == 0) throw ValidationError("linear teacher dims must be positive");
        if (!(p.input_scale > 0.0) || !(p.noise_sigma >= 0.0))
            throw ValidationError("input_scale must be > 0 and noise_sigma >= 0");
    }
}

std::size_t DomainSpec::input_dim() const {
    return family == DomainFamily::toy_segmentation ? segmentation.grid * segmentation.grid : linear.input_dim;
}

std::size_t DomainSpec::output_dim() const {
    return family == DomainFamily::toy_segmentation ? segmentation.grid * segmentation.grid : linear.output_dim;
}

TaskDataset::TaskDataset(std::string task_id, Split split, DomainSpec domain, Matrix inputs, Matrix targets)
    : task_id_(std::move(task_id)), split_(split), domain_(std::move(domain)), inputs_(std::move(inputs)),
      targets_(std::move(targets)) {
    if (inputs_.rows() != targets_.rows()) throw ValidationError("dataset inputs and targets differ in row count");
}

void TaskDataset::notify() const {
    if (observer_) (*observer_)(task_id_, split_);
}

const Matrix& TaskDataset::inputs() const {
    notify();
    return inputs_;
}

const Matrix& TaskDataset::targets() const {
    notify();
    return targets_;
}

TaskDataset TaskDataset::subset(std::span<const std::size_t> indices) const {
    notify();
    return TaskDataset(task_id_, split_, domain_, gather_rows(inputs_, indices), gather_rows(targets_, indices));
}

bool operator==(const TaskDataset& a, const TaskDataset& b) {
    return a.task_id_ == b.task_id_ && a.split_ == b.split_ && a.domain_ == b.domain_ && a.inputs_ == b.inputs_ &&
           a.targets_ == b.targets_;
}

std::vector<double> draw_shape_mask(ShapeType shape, std::size_t grid, double cx, double cy, double radius,
                                    double aspect) {
    std::vector<double> mask(grid * grid, 0.0);
    for (std::size_t y = 0; y < grid; ++y) {
        for (std::size_t x = 0; x < grid; ++x) {
            const double dx = static_cast<double>(x) + 0.5 - cx;
            const double dy = static_cast<double>(y) + 0.5 - cy;
            const double d = std::sqrt(dx * dx + dy * dy);
            bool inside = false;
            switch (shape) {
                case ShapeType::disk: inside = d <= radius; break;
                case ShapeType::square: inside = std::max(std::abs(dx), std::abs(dy)) <= radius; break;
                case ShapeType::ring: inside = d <= radius && d >= 0.5 * radius; break;
                case ShapeType::ellipse: {
                    const double ry = radius * aspect;
                    inside = (dx * dx) / (radius * radius) + (dy * dy) / (ry * ry) <= 1.0;
                    break;
                }
                case ShapeType::cross: {
                    const double arm = radius / 3.0;
                    inside = (std::abs(dx) <= radius && std::abs(dy) <= arm) ||
                             (std::abs(dy) <= radius && std::abs(dx) <= arm);
                    break;
                }
            }
            mask[y * grid + x] = inside ? 1.0 : 0.0;
        }
    }
    return mask;
}

namespace {

TaskDataset gen_segmentation(const DomainSpec& spec, Split split, std::size_t n, std::uint64_t seed) {
    const auto& p = spec.segmentation;
    const std::size_t g = p.grid;
    const std::size_t d = g * g;
    Rng rng(seed);
    Matrix x(n, d);
    Matrix y(n, d);
    const double gd = static_cast<double>(g);
    for (std::size_t i = 0; i < n; ++i) {
        const double radius = rng.uniform(p.min_radius, p.max_radius) * gd;
        const double margin = std::min(radius, 0.5 * gd);
        const double cx = rng.uniform(margin, gd - margin);
        const double cy = rng.uniform(margin, gd - margin);
        const double aspect = rng.uniform(0.45, 0.8);
        const std::vector<double> mask = draw_shape_mask(p.shape, g, cx, cy, radius, aspect);
        auto xi = x.row(i);
        auto yi = y.row(i);
        for (std::size_t k = 0; k < d; ++k) {
            yi[k] = mask[k];
            const double level = p.contrast * (mask[k] > 0.5 ? p.foreground : p.background);
            xi[k] = level + (p.noise_sigma > 0.0 ? p.noise_sigma * rng.normal() : 0.0);
        }
    }
    return TaskDataset(spec.name, split, spec, std::move(x), std::move(y));
}

TaskDataset gen_linear(const DomainSpec& spec, Split split, std::size_t n, std::uint64_t seed) {
    const auto& p = spec.linear;
    Rng teacher_rng(mix_seed(p.teacher_seed, hash_tag("teacher")));
    Matrix teacher(p.input_dim, p.output_dim);
    const double tscale = 1.0 / std::sqrt(static_cast<double>(p.input_dim));
    for (double& v : teacher.data()) v = teacher_rng.normal() * tscale;

    Rng rng(seed);
    Matrix x(n, p.input_dim);
    for (double& v : x.data()) v = p.input_shift + p.input_scale * rng.normal();
    Matrix y = matmul(x, teacher);
    for (double& v : y.data()) {
        if (p.noise_sigma > 0.0) v += p.noise_sigma * rng.normal();
        if (p.threshold) v = v > 0.0 ? 1.0 : 0.0;
    }
    return TaskDataset(spec.name, split, spec, std::move(x), std::move(y));
}

}  // namespace

TaskPair gen_domain(const DomainSpec& spec, std::size_t n_train, std::size_t n_test) {
    spec.validate();
    if (n_train == 0 || n_test == 0) throw ValidationError("dataset sizes must be at least 1");
    const std::uint64_t train_seed = mix_seed(spec.seed, hash_tag("train"));
    const std::uint64_t test_seed = mix_seed(spec.seed, hash_tag("test"));
    if (spec.family == DomainFamily::toy_segmentation)
        return {gen_segmentation(spec, Split::train, n_train, train_seed),
                gen_segmentation(spec, Split::test, n_test, test_seed)};
    return {gen_linear(spec, Split::train, n_train, train_seed), gen_linear(spec, Split::test, n_test, test_seed)};
}

std::vector<DomainSpec> default5_suite(std::uint64_t seed) {
    struct Row {
        const char* name;
        ShapeType shape;
        double fg, bg, contrast, noise;
    };
    static constexpr Row rows[] = {
        {"polyp_disk", ShapeType::disk, 1.0, -1.0, 0.8, 0.3},
        {"camo_ellipse", ShapeType::ellipse, 0.35, -0.35, 1.0, 0.35},
        {"shadow_square", ShapeType::square, 0.1, -1.0, 0.8, 0.25},
        {"lesion_ring", ShapeType::ring, 1.2, 0.1, 0.8, 0.3},
        {"camo_cross", ShapeType::cross, 0.45, -0.25, 1.0, 0.4},
    };
    std::vector<DomainSpec> out;
    for (const Row& r : rows) {
        DomainSpec s;
        s.name = r.name;
        s.family = DomainFamily::toy_segmentation;
        s.seed = mix_seed(seed, hash_tag(r.name));
        s.segmentation.grid = 16;
        s.segmentation.shape = r.shape;
        s.segmentation.foreground = r.fg;
        s.segmentation.background = r.bg;
        s.segmentation.contrast = r.contrast;
        s.segmentation.noise_sigma = r.noise;
        out.push_back(s);
    }
    return out;
}

TaskDataset concat_datasets(const std::string& task_id, const std::vector<const TaskDataset*>& parts) {
    if (parts.empty()) throw ValidationError("concat_datasets: nothing to concatenate");
    Matrix x;
    Matrix y;
    for (const TaskDataset* p : parts) {
        x = vstack(x, p->inputs());
        y = vstack(y, p->targets());
    }
    return TaskDataset(task_id, Split::train, parts.front()->domain(), std::move(x), std::move(y));
}

}  // namespace regcl
