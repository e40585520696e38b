#pragma once

#include "regcl/linalg.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace regcl {

enum class DomainFamily { linear_teacher, toy_segmentation };
enum class ShapeType { disk, square, ring, ellipse, cross };
enum class Split { train, test };

const char* to_string(DomainFamily f);
const char* to_string(ShapeType s);
const char* to_string(Split s);
DomainFamily parse_domain_family(const std::string& s);
ShapeType parse_shape_type(const std::string& s);
Split parse_split(const std::string& s);

/// g×g images with one shape each; pixel = contrast·(fg or bg) + noise·ε.
struct SegmentationParams {
    std::size_t grid = 16;
    ShapeType shape = ShapeType::disk;
    double foreground = 1.0;
    double background = -1.0;
    double noise_sigma = 0.2;
    double contrast = 1.0;
    /// Shape radius range as a fraction of the grid side.
    double min_radius = 0.15;
    double max_radius = 0.35;

    friend bool operator==(const SegmentationParams&, const SegmentationParams&) = default;
};

/// x ~ N(input_shift, input_scale²·I), y = x·T (+ noise), optionally thresholded at 0.
struct LinearTeacherParams {
    std::size_t input_dim = 8;
    std::size_t output_dim = 2;
    std::uint64_t teacher_seed = 0;
    double input_scale = 1.0;
    double input_shift = 0.0;
    double noise_sigma = 0.0;
    bool threshold = false;

    friend bool operator==(const LinearTeacherParams&, const LinearTeacherParams&) = default;
};

struct DomainSpec {
    std::string name;
    DomainFamily family = DomainFamily::toy_segmentation;
    std::uint64_t seed = 0;
    SegmentationParams segmentation;
    LinearTeacherParams linear;

    void validate() const;
    std::size_t input_dim() const;
    std::size_t output_dim() const;
    friend bool operator==(const DomainSpec&, const DomainSpec&) = default;
};

/// Optional read hook, called with (task_id, split) whenever a dataset's rows
/// are handed out.
using AccessObserver = std::function<void(const std::string& task_id, Split split)>;

class TaskDataset {
public:
    TaskDataset() = default;
    TaskDataset(std::string task_id, Split split, DomainSpec domain, Matrix inputs, Matrix targets);

    const std::string& task_id() const noexcept { return task_id_; }
    Split split() const noexcept { return split_; }
    const DomainSpec& domain() const noexcept { return domain_; }
    std::size_t size() const noexcept { return inputs_.rows(); }

    const Matrix& inputs() const;
    const Matrix& targets() const;

    /// Rows at `indices` as a new dataset (same id, domain and split).
    TaskDataset subset(std::span<const std::size_t> indices) const;

    void set_observer(std::shared_ptr<const AccessObserver> observer) { observer_ = std::move(observer); }

    /// Content equality; observers are ignored.
    friend bool operator==(const TaskDataset& a, const TaskDataset& b);

private:
    void notify() const;

    std::string task_id_;
    Split split_ = Split::train;
    DomainSpec domain_;
    Matrix inputs_;
    Matrix targets_;
    std::shared_ptr<const AccessObserver> observer_;
};

struct TaskPair {
    TaskDataset train;
    TaskDataset test;
};

/// Deterministic in (spec, sizes). Train and test come from separate streams.
TaskPair gen_domain(const DomainSpec& spec, std::size_t n_train, std::size_t n_test);

/// Binary shape mask (row-major g×g) for one image; exposed for tests.
std::vector<double> draw_shape_mask(ShapeType shape, std::size_t grid, double cx, double cy, double radius,
                                    double aspect);

/// The five-domain sequence: polyp-like disks, camouflaged ellipses, dark
/// shadow squares, lesion-like rings, camouflaged crosses. Seeds derive from `seed`.
std::vector<DomainSpec> default5_suite(std::uint64_t seed);

/// Concatenates datasets row-wise into a new train-split dataset.
TaskDataset concat_datasets(const std::string& task_id, const std::vector<const TaskDataset*>& parts);

}  // namespace regcl
