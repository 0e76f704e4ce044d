#pragma once

// Online UCB viewpoint enhancement. Each action anchors at one training
// viewpoint and bundles its m nearest candidate viewpoints; the reward is
// the validation-PSNR difference between a refine step on the enhanced batch
// and one on the original batch.
//
//   UCB_a(t) = rhat_a(t) + c * sqrt(2 ln t / N_a(t)),  a_t = argmax UCB_a(t)
//   r_a(t)   = PSNR_enhanced - PSNR_original

#include <functional>
#include <vector>

#include "voxmesh/camera.hpp"

namespace voxmesh {

struct ViewpointAction {
    int id = 0;
    int anchor = 0;            // training viewpoint index
    std::vector<int> members;  // candidate indices, sorted by distance to anchor
};

inline std::vector<ViewpointAction> build_actions(const std::vector<Vec3>& train_centers,
                                                  const std::vector<Vec3>& candidate_centers,
                                                  int m) {
    if (candidate_centers.empty()) throw std::runtime_error("build_actions: empty candidate set");
    if (m < 1 || size_t(m) > candidate_centers.size())
        throw std::runtime_error("build_actions: need 1 <= m <= |candidates|");
    std::vector<ViewpointAction> actions;
    actions.reserve(train_centers.size());
    for (size_t a = 0; a < train_centers.size(); ++a) {
        std::vector<std::pair<double, int>> dist;
        dist.reserve(candidate_centers.size());
        for (size_t c = 0; c < candidate_centers.size(); ++c)
            dist.emplace_back((candidate_centers[c] - train_centers[a]).norm(), int(c));
        std::sort(dist.begin(), dist.end());  // ties fall back to candidate index
        ViewpointAction act;
        act.id = int(a);
        act.anchor = int(a);
        for (int k = 0; k < m; ++k) act.members.push_back(dist[k].second);
        actions.push_back(std::move(act));
    }
    return actions;
}

struct BanditState {
    std::vector<int64_t> counts;
    std::vector<double> means;
    int64_t t = 0;
    double c = 1.0;
    double init_value = 1e6;

    explicit BanditState(size_t n_actions = 0, double c_ = 1.0, double init = 1e6)
        : counts(n_actions, 0), means(n_actions, 0.0), c(c_), init_value(init) {}

    size_t size() const { return counts.size(); }
};

inline double ucb_value(const BanditState& st, size_t a, int64_t t) {
    if (st.counts[a] == 0) return st.init_value;  // force initial exploration
    return st.means[a] + st.c * std::sqrt(2.0 * std::log(double(t)) / double(st.counts[a]));
}

// Argmax of the UCB values; ties broken by lowest action id.
inline size_t select_action(const BanditState& st, int64_t t) {
    if (st.size() == 0) throw std::runtime_error("select_action: no actions");
    size_t best = 0;
    double best_v = ucb_value(st, 0, t);
    for (size_t a = 1; a < st.size(); ++a) {
        double v = ucb_value(st, a, t);
        if (v > best_v) {
            best_v = v;
            best = a;
        }
    }
    return best;
}

inline double compute_reward(double psnr_enhanced, double psnr_original) {
    return psnr_enhanced - psnr_original;
}

inline void update(BanditState& st, size_t a, double reward) {
    st.counts[a] += 1;
    st.means[a] += (reward - st.means[a]) / double(st.counts[a]);
    st.t += 1;
}

// ---------------------------------------------------------------------------
// Dual-branch enhancement protocol. The trainer abstraction keeps the bandit
// testable against stubs.

struct BanditTrainer {
    virtual ~BanditTrainer() = default;
    virtual void save(int slot) = 0;
    virtual void load(int slot) = 0;
    // One refine step; `extra_candidates` empty means original batch only.
    virtual void step(const std::vector<int>& extra_candidates) = 0;
    virtual double evaluate_psnr() = 0;
};

enum class CommitPolicy { Enhanced, BetterOfTwo };

struct EnhancementRecord {
    int64_t t = 0;
    int action = -1;
    std::vector<int> members;
    double psnr_enhanced = 0;
    double psnr_original = 0;
    double reward = 0;
    int64_t count_after = 0;
    double mean_after = 0;
};

// Runs one enhancement step: select (or accept) an action, measure both
// branches from the same snapshot, update the bandit, and commit per policy.
// State is only updated once both branches succeeded.
inline EnhancementRecord enhancement_step(
    BanditTrainer& trainer, BanditState& state, const std::vector<ViewpointAction>& actions,
    CommitPolicy policy = CommitPolicy::Enhanced, int chosen_action = -1) {
    if (actions.empty()) throw std::runtime_error("enhancement_step: no actions");
    int64_t t = state.t + 1;
    size_t a = chosen_action >= 0 ? size_t(chosen_action) : select_action(state, t);

    constexpr int kSlotBase = 0, kSlotEnhanced = 1;
    trainer.save(kSlotBase);
    trainer.step(actions[a].members);
    double psnr_enh = trainer.evaluate_psnr();
    trainer.save(kSlotEnhanced);

    trainer.load(kSlotBase);
    trainer.step({});
    double psnr_orig = trainer.evaluate_psnr();

    double reward = compute_reward(psnr_enh, psnr_orig);
    update(state, a, reward);

    if (policy == CommitPolicy::Enhanced || psnr_enh >= psnr_orig) trainer.load(kSlotEnhanced);

    EnhancementRecord rec;
    rec.t = t;
    rec.action = int(a);
    rec.members = actions[a].members;
    rec.psnr_enhanced = psnr_enh;
    rec.psnr_original = psnr_orig;
    rec.reward = reward;
    rec.count_after = state.counts[a];
    rec.mean_after = state.means[a];
    return rec;
}

}  // namespace voxmesh
