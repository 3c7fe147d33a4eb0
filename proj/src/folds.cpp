#include "neuroclip/folds.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <string>

#include "neuroclip/errors.hpp"

namespace neuroclip::folds {

std::vector<std::size_t> FoldPlan::test_indices(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignment.size(); ++i)
        if (assignment[i] == fold) out.push_back(i);
    return out;
}

std::vector<std::size_t> FoldPlan::train_indices(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignment.size(); ++i)
        if (assignment[i] != fold) out.push_back(i);
    return out;
}

FoldPlan make_kfold(const std::vector<std::size_t>& labels, std::size_t k,
                    std::uint64_t seed) {
    if (k < 2) throw ConfigError("kfold: k must be >= 2");
    if (labels.size() < k)
        throw DataError("kfold: " + std::to_string(labels.size()) +
                        " items cannot fill " + std::to_string(k) + " folds");
    FoldPlan plan;
    plan.scheme = Scheme::kfold_shuffled;
    plan.n_folds = k;
    plan.seed = seed;
    plan.assignment.assign(labels.size(), 0);

    std::map<std::size_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

    std::mt19937_64 rng(seed);
    std::size_t next_fold = 0;  // continue dealing across classes to even out sizes
    for (auto& [cls, idx] : by_class) {
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t i : idx) {
            plan.assignment[i] = next_fold;
            next_fold = (next_fold + 1) % k;
        }
    }
    return plan;
}

FoldPlan make_loso(const std::vector<int>& subject_of_item) {
    if (subject_of_item.empty()) throw DataError("loso: no items");
    std::set<int> subjects(subject_of_item.begin(), subject_of_item.end());
    FoldPlan plan;
    plan.scheme = Scheme::loso;
    plan.n_folds = subjects.size();
    plan.fold_subject.assign(subjects.begin(), subjects.end());
    plan.assignment.resize(subject_of_item.size());
    std::map<int, std::size_t> fold_of;
    for (std::size_t f = 0; f < plan.fold_subject.size(); ++f)
        fold_of[plan.fold_subject[f]] = f;
    for (std::size_t i = 0; i < subject_of_item.size(); ++i)
        plan.assignment[i] = fold_of[subject_of_item[i]];
    return plan;
}

void assert_no_subject_leakage(const FoldPlan& plan,
                               const std::vector<int>& subject_of_item) {
    if (plan.assignment.size() != subject_of_item.size())
        throw DataError("leakage check: plan covers " +
                        std::to_string(plan.assignment.size()) + " items, got " +
                        std::to_string(subject_of_item.size()));
    for (std::size_t f = 0; f < plan.n_folds; ++f) {
        std::set<int> test_subjects, train_subjects;
        for (std::size_t i = 0; i < plan.assignment.size(); ++i) {
            (plan.assignment[i] == f ? test_subjects : train_subjects)
                .insert(subject_of_item[i]);
        }
        for (int s : test_subjects)
            if (train_subjects.count(s))
                throw DataError("subject leakage: subject " + std::to_string(s) +
                                " appears in both train and test of fold " +
                                std::to_string(f));
    }
}

}  // namespace neuroclip::folds
