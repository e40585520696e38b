#include "oracles.hpp"

#include "regcl/dataset.hpp"
#include "regcl/errors.hpp"
#include "regcl/harness.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace regcl;

namespace {

DomainSpec seg(const std::string& name, std::uint64_t seed) {
    DomainSpec d;
    d.name = name;
    d.seed = seed;
    d.segmentation.grid = 10;
    return d;
}

DomainSpec teacher(std::uint64_t seed, std::uint64_t teacher_seed) {
    DomainSpec d;
    d.name = "teacher";
    d.family = DomainFamily::linear_teacher;
    d.seed = seed;
    d.linear.input_dim = 6;
    d.linear.output_dim = 3;
    d.linear.teacher_seed = teacher_seed;
    return d;
}

}  // namespace

TEST(GenDomain, DeterministicAndSplitsDiffer) {
    const TaskPair a = gen_domain(seg("a", 3), 20, 10);
    const TaskPair b = gen_domain(seg("a", 3), 20, 10);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.test, b.test);
    EXPECT_EQ(a.train.split(), Split::train);
    EXPECT_EQ(a.test.split(), Split::test);
    EXPECT_FALSE(slice_rows(a.train.inputs(), 0, 10) == a.test.inputs());
    EXPECT_FALSE(gen_domain(seg("a", 4), 20, 10).train == a.train);
}

TEST(GenDomain, SegmentationShapesAndBinaryTargets) {
    const TaskPair p = gen_domain(seg("a", 5), 30, 5);
    EXPECT_EQ(p.train.inputs().rows(), 30u);
    EXPECT_EQ(p.train.inputs().cols(), 100u);
    EXPECT_EQ(p.train.targets().cols(), 100u);
    for (double v : p.train.targets().data()) EXPECT_TRUE(v == 0.0 || v == 1.0);
    for (std::size_t i = 0; i < 30; ++i) {
        double fg = 0.0;
        for (double v : p.train.targets().row(i)) fg += v;
        EXPECT_GT(fg, 0.0) << "every image holds a shape";
    }
}

TEST(GenDomain, NoiselessDomainIsSeparableByThreshold) {
    for (ShapeType shape : {ShapeType::disk, ShapeType::square, ShapeType::ring, ShapeType::ellipse, ShapeType::cross}) {
        DomainSpec d = seg("clean", 6);
        d.segmentation.shape = shape;
        d.segmentation.noise_sigma = 0.0;
        d.segmentation.contrast = 1.0;
        const TaskPair p = gen_domain(d, 5, 20);
        const double mid = 0.5 * (d.segmentation.foreground + d.segmentation.background);
        Matrix pred = p.test.inputs();
        for (double& v : pred.data()) v = v > mid ? 1.0 : 0.0;
        const SegScores s = seg_metrics(pred, p.test.targets(), pred);
        EXPECT_EQ(s.iou, 1.0) << to_string(shape);
        EXPECT_EQ(s.mae, 0.0);
    }
}

TEST(GenDomain, LinearTeacherRecoveredByLeastSquares) {
    const TaskPair a = gen_domain(teacher(1, 42), 40, 10);
    const TaskPair b = gen_domain(teacher(2, 42), 40, 10);
    const Matrix ta = oracle::lstsq(a.train.inputs(), a.train.targets());
    const Matrix tb = oracle::lstsq(b.train.inputs(), b.train.targets());
    // Same teacher seed, different sample draws: the same map comes back.
    EXPECT_LT(oracle::max_abs(ta, tb), 1e-6);
    // And it explains held-out targets exactly.
    EXPECT_LT(oracle::max_abs(oracle::mul(a.test.inputs(), ta), a.test.targets()), 1e-6);
}

TEST(GenDomain, LinearTeacherThresholdIsBinary) {
    DomainSpec d = teacher(1, 1);
    d.linear.threshold = true;
    const TaskPair p = gen_domain(d, 20, 4);
    for (double v : p.train.targets().data()) EXPECT_TRUE(v == 0.0 || v == 1.0);
}

TEST(GenDomain, InvalidSpecs) {
    EXPECT_THROW(gen_domain(seg("a", 1), 0, 1), ValidationError);
    DomainSpec d = seg("", 1);
    EXPECT_THROW(gen_domain(d, 1, 1), ValidationError);
    d = seg("a", 1);
    d.segmentation.foreground = d.segmentation.background;
    EXPECT_THROW(d.validate(), ValidationError);
    d = seg("a", 1);
    d.segmentation.max_radius = 0.7;
    EXPECT_THROW(d.validate(), ValidationError);
    d = teacher(1, 1);
    d.linear.input_dim = 0;
    EXPECT_THROW(d.validate(), ValidationError);
    EXPECT_THROW(parse_domain_family("images"), ValidationError);
    EXPECT_THROW(parse_shape_type("star"), ValidationError);
}

TEST(ShapeMask, DiskArea) {
    const auto m = draw_shape_mask(ShapeType::disk, 16, 8.0, 8.0, 4.0, 1.0);
    double area = 0.0;
    for (double v : m) area += v;
    EXPECT_NEAR(area, 3.14159 * 16.0, 8.0);
    EXPECT_EQ(m[8 * 16 + 8], 1.0);
    EXPECT_EQ(m[0], 0.0);
}

TEST(ShapeMask, RingHasHole) {
    const auto m = draw_shape_mask(ShapeType::ring, 16, 8.0, 8.0, 6.0, 1.0);
    EXPECT_EQ(m[7 * 16 + 7], 0.0);
    EXPECT_EQ(m[7 * 16 + 12], 1.0);
}

TEST(DefaultSuite, FiveDistinctDomains) {
    const auto suite = default5_suite(1);
    ASSERT_EQ(suite.size(), 5u);
    std::set<std::string> names;
    for (std::size_t i = 0; i < suite.size(); ++i) {
        const auto& d = suite[i];
        names.insert(d.name);
        EXPECT_NO_THROW(d.validate());
        EXPECT_EQ(d.segmentation.grid, 16u);
        EXPECT_EQ(d.input_dim(), 256u);
        EXPECT_GT(d.segmentation.foreground, d.segmentation.background);
        for (std::size_t j = 0; j < i; ++j) {
            DomainSpec a = d, b = suite[j];
            a.name = b.name;
            a.seed = b.seed;
            EXPECT_FALSE(a == b) << "domains must differ in distribution";
        }
    }
    EXPECT_EQ(names.size(), 5u);
    EXPECT_EQ(suite.front().name, "polyp_disk");
    EXPECT_NE(default5_suite(2)[0].seed, suite[0].seed);
}

TEST(TaskDataset, ObserverSeesEveryRead) {
    TaskDataset ds = gen_domain(seg("obs", 1), 6, 2).train;
    std::vector<std::string> log;
    ds.set_observer(std::make_shared<const AccessObserver>(
        [&](const std::string& id, Split s) { log.push_back(id + ":" + to_string(s)); }));
    (void)ds.inputs();
    (void)ds.targets();
    const std::size_t idx[] = {0, 2};
    const TaskDataset sub = ds.subset(idx);
    EXPECT_EQ(log, (std::vector<std::string>{"obs:train", "obs:train", "obs:train"}));
    (void)sub.inputs();
    EXPECT_EQ(log.size(), 3u) << "subsets do not inherit the observer";
    EXPECT_EQ(sub.size(), 2u);
}

TEST(TaskDataset, RowCountMismatch) {
    EXPECT_THROW(TaskDataset("x", Split::train, DomainSpec{}, Matrix(2, 3), Matrix(3, 3)), ValidationError);
}

TEST(TaskDataset, ConcatStacksRows) {
    const TaskPair a = gen_domain(seg("a", 1), 4, 2);
    const TaskPair b = gen_domain(seg("b", 2), 3, 2);
    const TaskDataset c = concat_datasets("ab", {&a.train, &b.train});
    EXPECT_EQ(c.size(), 7u);
    EXPECT_EQ(slice_rows(c.inputs(), 4, 3), b.train.inputs());
    EXPECT_THROW(concat_datasets("none", {}), ValidationError);
}
