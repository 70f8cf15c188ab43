#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ppap/rng.hpp"
#include "ppap/tensor.hpp"

namespace ppap {

struct Dataset {
    Tensor x;                 // [n,d] or [n,c,h,w]
    std::vector<int> labels;  // primary labels (fine labels for cifar100)
    std::vector<int> coarse;  // superclass labels where applicable, else empty
    int n() const { return x.rank() == 0 ? 0 : x.dim(0); }
};

// One task of a continual-learning protocol: data plus its training schedule.
struct TaskSpec {
    std::string task_id;
    std::string head_name;
    Tensor x_train;
    std::vector<int> y_train;
    Tensor x_val;
    std::vector<int> y_val;
    int n_classes = 0;
    int epochs = 1;
    int batch = 32;
    bool aug_crop = false;  // random crop within a 4px zero pad, train only
    bool aug_hflip = false; // random horizontal flip, train only
};

enum class CifarVariant { cifar10, cifar100 };

inline constexpr std::array<float, 3> kCifarSeqMean{0.5071f, 0.4867f, 0.4408f};
inline constexpr std::array<float, 3> kCifarSeqStd{0.2675f, 0.2565f, 0.2761f};
inline constexpr std::array<float, 3> kCifarLocoMean{0.4914f, 0.4822f, 0.4465f};
inline constexpr std::array<float, 3> kCifarLocoStd{0.2470f, 0.2435f, 0.2616f};

// Public CIFAR binary layout: 3073-byte records (label + 3072 pixels) for
// cifar10, 3074-byte (coarse + fine + pixels) for cifar100. Pixels are scaled
// to [0,1] then normalized per channel.
Dataset load_cifar(const std::string& path, CifarVariant variant,
                   const std::array<float, 3>& mean, const std::array<float, 3>& stdev);

struct SplitPlan {
    std::uint64_t seed = 0;
    std::vector<double> fractions; // sums to 1
    bool stratified = true;
    bool shuffle = true; // false keeps per-class dataset order (iid generators)
};

// Disjoint, seed-deterministic splits; stratified splits hand out per-class
// counts by largest remainder so sizes are exact.
std::vector<Dataset> make_task_splits(const Dataset& d, const SplitPlan& plan);

// Pretrain on the 19 remaining superclasses (coarse labels relabeled 0..18),
// finetune on the held-out superclass's 5 fine classes (relabeled 0..4).
// Splits are per the plan; the third fraction, when present, is a held-back
// local test split that neither task sees.
std::pair<TaskSpec, TaskSpec> make_loco_tasks(const Dataset& d, int holdout, const SplitPlan& plan,
                                              int pretrain_epochs, int finetune_epochs, int batch);

// interleaved ring of Gaussian clusters: task t takes every n_tasks-th cluster
std::vector<TaskSpec> gen_cluster_split(std::uint64_t seed, int n_tasks, int classes_per_task,
                                        double radius, double sigma, int n_train_per, int n_val_per,
                                        int epochs, int batch);

// two-moons rotated per task
std::vector<TaskSpec> gen_moons_rotation(std::uint64_t seed, int n_tasks, double degrees_per_task,
                                         double noise, int n_train_per, int n_val_per,
                                         int epochs, int batch);

struct HierSpec {
    int n_super = 20;
    int n_fine = 5;
    int n_per = 150;  // samples per (super, fine) cell
    int dim = 40;
    double r = 4.0;   // superclass magnitude, antipodal +-r on axis s
    double delta = 3.0; // fine offset on axis n_super+f
    double sigma = 1.0;
    double hint = 0.8; // weak superclass pattern inside the fine dims
};

// Hierarchical Gaussian world for hold-one-out: superclass s occupies both
// +r*e_s and -r*e_s (sign alternates per sample), fine classes offset fresh
// axes, and `hint` plants a low-margin superclass cue inside those same axes.
Dataset gen_hier_gaussians(std::uint64_t seed, const HierSpec& spec);

// "PPDS" length-prefixed binary cache for synthetic datasets
void save_ppds(const std::string& path, const Dataset& d);
Dataset load_ppds(const std::string& path);

// training-time augmentation; validation paths never call these
Tensor augment_crop(const Tensor& x, const std::vector<std::pair<int, int>>& offsets, int pad);
Tensor augment_hflip(const Tensor& x, const std::vector<std::uint8_t>& flips);
Tensor augment(const Tensor& x, bool crop_pad4, bool hflip, Rng& rng);

} // namespace ppap
