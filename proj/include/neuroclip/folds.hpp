#pragma once

// Cross-validation fold planning with hard subject-leakage checks.

#include <cstddef>
#include <cstdint>
#include <vector>

namespace neuroclip::folds {

enum class Scheme { kfold_shuffled, loso };

struct FoldPlan {
    Scheme scheme = Scheme::kfold_shuffled;
    std::size_t n_folds = 0;
    std::uint64_t seed = 0;
    std::vector<std::size_t> assignment;  // fold id per item
    std::vector<int> fold_subject;        // loso only: held-out subject per fold

    std::vector<std::size_t> test_indices(std::size_t fold) const;
    std::vector<std::size_t> train_indices(std::size_t fold) const;
};

// Stratified by label: per-class shuffled round-robin dealing.
FoldPlan make_kfold(const std::vector<std::size_t>& labels, std::size_t k,
                    std::uint64_t seed);
FoldPlan make_loso(const std::vector<int>& subject_of_item);

// Hard failure when any fold's test subjects intersect its train subjects.
void assert_no_subject_leakage(const FoldPlan& plan,
                               const std::vector<int>& subject_of_item);

}  // namespace neuroclip::folds
