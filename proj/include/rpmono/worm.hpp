#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "rpmono/random_path.hpp"
#include "rpmono/rng.hpp"

namespace rpmono::rpm {

enum class WormMove {
    insert_link,
    remove_link,
    advance_head,
    retract_head,
    pair_ends,
    unpair,
    repair_vertex,
    recolour_link,
    recolour_component
};

/// Metropolis proposal with explicit forward/reverse proposal probabilities.
/// weight_ratio is the sampling-measure ratio (mu times the sector bias),
/// zero when the proposal leaves the sampling class.
struct WormProposal {
    bool valid = false;
    WormMove move = WormMove::insert_link;
    double weight_ratio = 0.0;
    double q_fwd = 1.0;
    double q_rev = 1.0;
    std::function<void()> undo;
};

/// Markov chain over path configurations with at most one open walk (two
/// unpaired ends; advance/retract grow it without intermediate states) and
/// at most two cross-pairing vertices. The sampling measure is
/// mu(w) * eta^{open ends} * kappa^{cross pairings}; the fugacities keep the
/// normalization sector well visited and divide out of the estimators
/// exactly. Detailed balance holds move by move.
class WormChain {
public:
    static constexpr double kEndFugacity = 0.12;
    static constexpr double kCrossFugacity = 0.5;

    WormChain(const RPMParams& params, TwoPointKind kind)
        : p_(params), kind_(kind), config_(params.geometry) {
        check_preset_ergodic();
        refresh_all();
    }

    const PathConfig& config() const { return config_; }
    const RPMParams& params() const { return p_; }
    int total_unpaired() const { return total_unpaired_; }
    int cross_vertex_count() const { return cross_count_; }
    int cross_pair_sum() const { return cross_sum_; }
    int cross_pairs_at(int v) const { return cross_at_[static_cast<std::size_t>(v)]; }

    double vertex_weight(int v) const {
        return p_.weight(local_stats(config_, v, p_.n_colours));
    }

    /// mu(config) times the sector bias; the stationary measure of the chain
    /// (up to normalization). Used by the detailed-balance tests.
    double sampling_weight() const {
        return config_weight(config_, p_) * std::pow(kEndFugacity, total_unpaired_) *
               std::pow(kCrossFugacity, cross_sum_);
    }

    WormProposal propose(WormMove mv, Rng& rng) {
        switch (mv) {
            case WormMove::insert_link: return propose_insert(rng);
            case WormMove::remove_link: return propose_remove(rng);
            case WormMove::advance_head: return propose_advance(rng);
            case WormMove::retract_head: return propose_retract(rng);
            case WormMove::pair_ends: return propose_pair(rng);
            case WormMove::unpair: return propose_unpair(rng);
            case WormMove::repair_vertex: return propose_repair(rng);
            case WormMove::recolour_link: return propose_recolour_link(rng);
            case WormMove::recolour_component: return propose_recolour_component(rng);
        }
        return {};
    }

    static WormMove pick_move(double r) {
        if (r < 0.10) return WormMove::insert_link;
        if (r < 0.20) return WormMove::remove_link;
        if (r < 0.40) return WormMove::advance_head;
        if (r < 0.60) return WormMove::retract_head;
        if (r < 0.70) return WormMove::pair_ends;
        if (r < 0.80) return WormMove::unpair;
        if (r < 0.90) return WormMove::repair_vertex;
        if (r < 0.95) return WormMove::recolour_link;
        return WormMove::recolour_component;
    }

    static double move_prob(WormMove mv) {
        switch (mv) {
            case WormMove::insert_link: return 0.10;
            case WormMove::remove_link: return 0.10;
            case WormMove::advance_head: return 0.20;
            case WormMove::retract_head: return 0.20;
            case WormMove::pair_ends: return 0.10;
            case WormMove::unpair: return 0.10;
            case WormMove::repair_vertex: return 0.10;
            case WormMove::recolour_link: return 0.05;
            case WormMove::recolour_component: return 0.05;
        }
        return 0.0;
    }

    /// One Metropolis step; returns true when the proposal was accepted.
    bool step(Rng& rng) {
        auto prop = propose(pick_move(rng.uniform()), rng);
        if (!prop.valid) return false;
        const double acc = std::min(1.0, prop.weight_ratio * prop.q_rev / prop.q_fwd);
        if (rng.uniform() < acc) return true;
        prop.undo();
        return false;
    }

    /// The two vertices carrying a cross pairing; only meaningful when
    /// cross_vertex_count() == 2.
    std::pair<int, int> defect_vertices() const {
        int a = -1, b = -1;
        for (int v = 0; v < static_cast<int>(cross_at_.size()); ++v)
            if (cross_at_[static_cast<std::size_t>(v)] > 0) {
                if (a < 0) a = v;
                else b = v;
            }
        return {a, b};
    }

    std::pair<int, int> open_end_vertices() const {
        int a = -1, b = -1;
        for (int v = 0; v < static_cast<int>(unpaired_at_.size()); ++v)
            for (int k = 0; k < unpaired_at_[static_cast<std::size_t>(v)]; ++k) {
                if (a < 0) a = v;
                else b = v;
            }
        return {a, b};
    }

    bool open_ends_are_colour1() const {
        for (int v = 0; v < p_.geometry.vertex_count(); ++v) {
            const auto& part = config_.partner[static_cast<std::size_t>(v)];
            for (int s = 0; s < static_cast<int>(part.size()); ++s)
                if (part[static_cast<std::size_t>(s)] < 0 &&
                    config_.colour(config_.slot_link(v, s)) != 1)
                    return false;
        }
        return true;
    }

private:
    RPMParams p_;
    TwoPointKind kind_;
    PathConfig config_;
    std::vector<int> unpaired_at_;
    std::vector<int> cross_at_;
    int total_unpaired_ = 0;
    int cross_count_ = 0;  // vertices with K >= 1
    int cross_sum_ = 0;    // sum of K over vertices

    void check_preset_ergodic() const {
        const int N = p_.n_colours;
        auto probe = [&](auto fill) {
            LocalStats st(N);
            fill(st);
            return p_.weight(st) > 0.0;
        };
        bool ok = probe([](LocalStats&) {}) &&
                  probe([](LocalStats& s) {
                      s.unpaired[0] = 1;
                      s.elements = 1;
                  }) &&
                  probe([](LocalStats& s) {
                      s.unpaired[0] = 2;
                      s.elements = 2;
                  }) &&
                  probe([](LocalStats& s) {
                      s.same_pairs[0] = 1;
                      s.elements = 1;
                  });
        if (kind_ == TwoPointKind::crossing)
            ok = ok && probe([](LocalStats& s) {
                     s.cross_pairs = 1;
                     s.elements = 1;
                 });
        if (!ok)
            throw std::invalid_argument(
                "weight preset assigns zero to patterns the worm moves rely on (non-ergodic)");
    }

    void refresh_all() {
        const int V = p_.geometry.vertex_count();
        unpaired_at_.assign(static_cast<std::size_t>(V), 0);
        cross_at_.assign(static_cast<std::size_t>(V), 0);
        total_unpaired_ = 0;
        cross_count_ = 0;
        cross_sum_ = 0;
        for (int v = 0; v < V; ++v) refresh_vertex(v);
    }

    void refresh_vertex(int v) {
        const auto st = local_stats(config_, v, p_.n_colours);
        total_unpaired_ -= unpaired_at_[static_cast<std::size_t>(v)];
        cross_count_ -= cross_at_[static_cast<std::size_t>(v)] > 0 ? 1 : 0;
        cross_sum_ -= cross_at_[static_cast<std::size_t>(v)];
        unpaired_at_[static_cast<std::size_t>(v)] = st.total_unpaired();
        cross_at_[static_cast<std::size_t>(v)] = st.cross_pairs;
        total_unpaired_ += unpaired_at_[static_cast<std::size_t>(v)];
        cross_count_ += st.cross_pairs > 0 ? 1 : 0;
        cross_sum_ += st.cross_pairs;
    }

    bool in_class() const { return total_unpaired_ <= 2 && cross_count_ <= 2; }

    /// eta^{delta ends} kappa^{delta cross}; multiplied into every ratio.
    double bias_ratio(int ends_before, int cross_before) const {
        return std::pow(kEndFugacity, total_unpaired_ - ends_before) *
               std::pow(kCrossFugacity, cross_sum_ - cross_before);
    }

    void insert_slot(int v, int idx) {
        auto& part = config_.partner[static_cast<std::size_t>(v)];
        for (auto& q : part)
            if (q >= idx) ++q;
        part.insert(part.begin() + idx, -1);
    }

    void remove_slot(int v, int idx) {
        auto& part = config_.partner[static_cast<std::size_t>(v)];
        part.erase(part.begin() + idx);
        for (auto& q : part)
            if (q > idx) --q;
    }

    int unpaired_both_ends_on(int e, std::vector<int>* out = nullptr) const {
        const auto& ed = p_.geometry.edges()[static_cast<std::size_t>(e)];
        int count = 0;
        for (int i = 0; i < config_.m(e); ++i) {
            const LinkRef l{e, i};
            const int su = config_.link_slot(ed.u, l);
            const int sv = config_.link_slot(ed.v, l);
            if (config_.partner[static_cast<std::size_t>(ed.u)][static_cast<std::size_t>(su)] < 0 &&
                config_.partner[static_cast<std::size_t>(ed.v)][static_cast<std::size_t>(sv)] < 0) {
                ++count;
                if (out) out->push_back(i);
            }
        }
        return count;
    }

    /// All open ends as (vertex, slot), in canonical order.
    std::vector<std::pair<int, int>> open_ends() const {
        std::vector<std::pair<int, int>> ends;
        for (int v = 0; v < p_.geometry.vertex_count(); ++v) {
            if (unpaired_at_[static_cast<std::size_t>(v)] == 0) continue;
            const auto& part = config_.partner[static_cast<std::size_t>(v)];
            for (int s = 0; s < static_cast<int>(part.size()); ++s)
                if (part[static_cast<std::size_t>(s)] < 0) ends.push_back({v, s});
        }
        return ends;
    }

    WormProposal propose_insert(Rng& rng) {
        const int E = p_.geometry.edge_count();
        const int N = p_.n_colours;
        const int e = rng.index(E);
        const int c = 1 + rng.index(N);
        const int m = config_.m(e);
        if (p_.m_max > 0 && m >= p_.m_max) return {};
        const int pos = rng.index(m + 1);
        const auto& ed = p_.geometry.edges()[static_cast<std::size_t>(e)];
        const int u0 = total_unpaired_, k0 = cross_sum_;

        const double w_u0 = vertex_weight(ed.u), w_v0 = vertex_weight(ed.v);
        const int slot_u = config_.slot_base(ed.u, e) + pos;
        const int slot_v = config_.slot_base(ed.v, e) + pos;
        auto& col = config_.colours[static_cast<std::size_t>(e)];
        col.insert(col.begin() + pos, static_cast<std::uint8_t>(c));
        insert_slot(ed.u, slot_u);
        insert_slot(ed.v, slot_v);
        refresh_vertex(ed.u);
        refresh_vertex(ed.v);

        WormProposal prop;
        prop.valid = true;
        prop.move = WormMove::insert_link;
        prop.weight_ratio = in_class() ? (p_.beta / (m + 1)) *
                                             safe_ratio(vertex_weight(ed.u), w_u0) *
                                             safe_ratio(vertex_weight(ed.v), w_v0) *
                                             bias_ratio(u0, k0)
                                       : 0.0;
        prop.q_fwd = move_prob(WormMove::insert_link) / (static_cast<double>(E) * N * (m + 1));
        const int removable = unpaired_both_ends_on(e);
        prop.q_rev = move_prob(WormMove::remove_link) / (static_cast<double>(E) * removable);
        prop.undo = [this, e, pos, slot_u, slot_v, ed]() {
            auto& cc = config_.colours[static_cast<std::size_t>(e)];
            cc.erase(cc.begin() + pos);
            remove_slot(ed.u, slot_u);
            remove_slot(ed.v, slot_v);
            refresh_vertex(ed.u);
            refresh_vertex(ed.v);
        };
        return prop;
    }

    WormProposal propose_remove(Rng& rng) {
        const int E = p_.geometry.edge_count();
        const int N = p_.n_colours;
        const int e = rng.index(E);
        std::vector<int> removable;
        const int k = unpaired_both_ends_on(e, &removable);
        if (k == 0) return {};
        const int pos = removable[static_cast<std::size_t>(rng.index(k))];
        const int m = config_.m(e);
        const auto& ed = p_.geometry.edges()[static_cast<std::size_t>(e)];
        const std::uint8_t c = config_.colours[static_cast<std::size_t>(e)][static_cast<std::size_t>(pos)];
        const int u0 = total_unpaired_, k0 = cross_sum_;

        const double w_u0 = vertex_weight(ed.u), w_v0 = vertex_weight(ed.v);
        const int slot_u = config_.slot_base(ed.u, e) + pos;
        const int slot_v = config_.slot_base(ed.v, e) + pos;
        auto& col = config_.colours[static_cast<std::size_t>(e)];
        col.erase(col.begin() + pos);
        remove_slot(ed.u, slot_u);
        remove_slot(ed.v, slot_v);
        refresh_vertex(ed.u);
        refresh_vertex(ed.v);

        WormProposal prop;
        prop.valid = true;
        prop.move = WormMove::remove_link;
        prop.weight_ratio = in_class() ? (m / p_.beta) * safe_ratio(vertex_weight(ed.u), w_u0) *
                                             safe_ratio(vertex_weight(ed.v), w_v0) *
                                             bias_ratio(u0, k0)
                                       : 0.0;
        prop.q_fwd = move_prob(WormMove::remove_link) / (static_cast<double>(E) * k);
        prop.q_rev = move_prob(WormMove::insert_link) / (static_cast<double>(E) * N * m);
        prop.undo = [this, e, pos, slot_u, slot_v, ed, c]() {
            auto& cc = config_.colours[static_cast<std::size_t>(e)];
            cc.insert(cc.begin() + pos, c);
            insert_slot(ed.u, slot_u);
            insert_slot(ed.v, slot_v);
            refresh_vertex(ed.u);
            refresh_vertex(ed.v);
        };
        return prop;
    }

    /// advance: consume an open end at vertex h, insert a new link on an
    /// incident edge and pair it with the old end; the open end migrates to
    /// the far endpoint. Keeps the number of open ends fixed.
    WormProposal propose_advance(Rng& rng) {
        const int N = p_.n_colours;
        const auto ends = open_ends();
        if (ends.empty()) return {};
        const auto [h, slot_h] = ends[static_cast<std::size_t>(rng.index(static_cast<int>(ends.size())))];
        const auto& inc = p_.geometry.incident_edges(h);
        const int e = inc[static_cast<std::size_t>(rng.index(static_cast<int>(inc.size())))];
        const int c = 1 + rng.index(N);
        const int m = config_.m(e);
        if (p_.m_max > 0 && m >= p_.m_max) return {};
        const int pos = rng.index(m + 1);
        const auto& ed = p_.geometry.edges()[static_cast<std::size_t>(e)];
        const int far = ed.u == h ? ed.v : ed.u;
        const int u0 = total_unpaired_, k0 = cross_sum_;

        const double w_h0 = vertex_weight(h), w_f0 = vertex_weight(far);
        // insert the link, then pair the old end with its near end
        const int slot_h_new = config_.slot_base(h, e) + pos;
        const int slot_f_new = config_.slot_base(far, e) + pos;
        auto& col = config_.colours[static_cast<std::size_t>(e)];
        col.insert(col.begin() + pos, static_cast<std::uint8_t>(c));
        insert_slot(h, slot_h_new);
        insert_slot(far, slot_f_new);
        const int old_end_slot = slot_h + (slot_h >= slot_h_new ? 1 : 0);
        auto& ph = config_.partner[static_cast<std::size_t>(h)];
        ph[static_cast<std::size_t>(old_end_slot)] = slot_h_new;
        ph[static_cast<std::size_t>(slot_h_new)] = old_end_slot;
        refresh_vertex(h);
        refresh_vertex(far);

        WormProposal prop;
        prop.valid = true;
        prop.move = WormMove::advance_head;
        prop.weight_ratio = in_class() ? (p_.beta / (m + 1)) * safe_ratio(vertex_weight(h), w_h0) *
                                             safe_ratio(vertex_weight(far), w_f0) *
                                             bias_ratio(u0, k0)
                                       : 0.0;
        prop.q_fwd = move_prob(WormMove::advance_head) /
                     (static_cast<double>(ends.size()) * static_cast<double>(inc.size()) * N *
                      (m + 1));
        // reverse: retract picks the migrated end at `far`
        prop.q_rev = move_prob(WormMove::retract_head) / static_cast<double>(ends.size());
        prop.undo = [this, e, pos, h, far, slot_h_new, slot_f_new, old_end_slot]() {
            auto& pph = config_.partner[static_cast<std::size_t>(h)];
            pph[static_cast<std::size_t>(old_end_slot)] = -1;
            pph[static_cast<std::size_t>(slot_h_new)] = -1;
            auto& cc = config_.colours[static_cast<std::size_t>(e)];
            cc.erase(cc.begin() + pos);
            remove_slot(h, slot_h_new);
            remove_slot(far, slot_f_new);
            refresh_vertex(h);
            refresh_vertex(far);
        };
        return prop;
    }

    /// retract: pick an open end whose link is paired at the far endpoint;
    /// unpair there and delete the link, migrating the end backwards.
    WormProposal propose_retract(Rng& rng) {
        const int N = p_.n_colours;
        const auto ends = open_ends();
        if (ends.empty()) return {};
        const auto [h, slot_h] = ends[static_cast<std::size_t>(rng.index(static_cast<int>(ends.size())))];
        const LinkRef l = config_.slot_link(h, slot_h);
        const auto& ed = p_.geometry.edges()[static_cast<std::size_t>(l.edge)];
        const int far = ed.u == h ? ed.v : ed.u;
        const int slot_far = config_.link_slot(far, l);
        const int partner_far =
            config_.partner[static_cast<std::size_t>(far)][static_cast<std::size_t>(slot_far)];
        if (partner_far < 0) return {};  // single floating link: remove_link territory
        const int m = config_.m(l.edge);
        const std::uint8_t c = config_.colour(l);
        const int u0 = total_unpaired_, k0 = cross_sum_;

        const double w_h0 = vertex_weight(h), w_f0 = vertex_weight(far);
        auto& pf = config_.partner[static_cast<std::size_t>(far)];
        pf[static_cast<std::size_t>(slot_far)] = -1;
        pf[static_cast<std::size_t>(partner_far)] = -1;
        auto& col = config_.colours[static_cast<std::size_t>(l.edge)];
        col.erase(col.begin() + l.index);
        const int slot_h_l = config_.slot_base(h, l.edge) + l.index;
        remove_slot(h, slot_h_l);
        remove_slot(far, slot_far);
        refresh_vertex(h);
        refresh_vertex(far);

        WormProposal prop;
        prop.valid = true;
        prop.move = WormMove::retract_head;
        prop.weight_ratio = in_class() ? (m / p_.beta) * safe_ratio(vertex_weight(h), w_h0) *
                                             safe_ratio(vertex_weight(far), w_f0) *
                                             bias_ratio(u0, k0)
                                       : 0.0;
        prop.q_fwd = move_prob(WormMove::retract_head) / static_cast<double>(ends.size());
        const auto& inc = p_.geometry.incident_edges(far);
        prop.q_rev = move_prob(WormMove::advance_head) /
                     (static_cast<double>(ends.size()) * static_cast<double>(inc.size()) * N * m);
        const int far_new_end = partner_far > slot_far ? partner_far - 1 : partner_far;
        prop.undo = [this, l, h, far, slot_h_l, slot_far, far_new_end, c]() {
            auto& cc = config_.colours[static_cast<std::size_t>(l.edge)];
            cc.insert(cc.begin() + l.index, c);
            insert_slot(h, slot_h_l);
            insert_slot(far, slot_far);
            auto& ppf = config_.partner[static_cast<std::size_t>(far)];
            const int back = far_new_end + (far_new_end >= slot_far ? 1 : 0);
            ppf[static_cast<std::size_t>(slot_far)] = back;
            ppf[static_cast<std::size_t>(back)] = slot_far;
            refresh_vertex(h);
            refresh_vertex(far);
        };
        return prop;
    }

    WormProposal propose_pair(Rng& rng) {
        const int V = p_.geometry.vertex_count();
        const int v = rng.index(V);
        auto& part = config_.partner[static_cast<std::size_t>(v)];
        std::vector<int> free;
        for (int s = 0; s < static_cast<int>(part.size()); ++s)
            if (part[static_cast<std::size_t>(s)] < 0) free.push_back(s);
        const int f = static_cast<int>(free.size());
        if (f < 2) return {};
        int i = rng.index(f), j = rng.index(f - 1);
        if (j >= i) ++j;
        const int a = std::min(free[static_cast<std::size_t>(i)], free[static_cast<std::size_t>(j)]);
        const int b = std::max(free[static_cast<std::size_t>(i)], free[static_cast<std::size_t>(j)]);
        const int u0 = total_unpaired_, k0 = cross_sum_;

        const double w0 = vertex_weight(v);
        part[static_cast<std::size_t>(a)] = b;
        part[static_cast<std::size_t>(b)] = a;
        refresh_vertex(v);

        WormProposal prop;
        prop.valid = true;
        prop.move = WormMove::pair_ends;
        prop.weight_ratio =
            in_class() ? safe_ratio(vertex_weight(v), w0) * bias_ratio(u0, k0) : 0.0;
        prop.q_fwd = move_prob(WormMove::pair_ends) /
                     (static_cast<double>(V) * (f * (f - 1) / 2.0));
        prop.q_rev = move_prob(WormMove::unpair) / (static_cast<double>(V) * pair_count(v));
        prop.undo = [this, v, a, b]() {
            auto& pp = config_.partner[static_cast<std::size_t>(v)];
            pp[static_cast<std::size_t>(a)] = -1;
            pp[static_cast<std::size_t>(b)] = -1;
            refresh_vertex(v);
        };
        return prop;
    }

    WormProposal propose_unpair(Rng& rng) {
        const int V = p_.geometry.vertex_count();
        const int v = rng.index(V);
        auto& part = config_.partner[static_cast<std::size_t>(v)];
        std::vector<std::pair<int, int>> pairs;
        for (int s = 0; s < static_cast<int>(part.size()); ++s)
            if (part[static_cast<std::size_t>(s)] > s) pairs.push_back({s, part[static_cast<std::size_t>(s)]});
        if (pairs.empty()) return {};
        const auto [a, b] = pairs[static_cast<std::size_t>(rng.index(static_cast<int>(pairs.size())))];
        const int u0 = total_unpaired_, k0 = cross_sum_;

        const double w0 = vertex_weight(v);
        part[static_cast<std::size_t>(a)] = -1;
        part[static_cast<std::size_t>(b)] = -1;
        refresh_vertex(v);

        WormProposal prop;
        prop.valid = true;
        prop.move = WormMove::unpair;
        prop.weight_ratio =
            in_class() ? safe_ratio(vertex_weight(v), w0) * bias_ratio(u0, k0) : 0.0;
        prop.q_fwd = move_prob(WormMove::unpair) /
                     (static_cast<double>(V) * static_cast<double>(pairs.size()));
        int free_after = 0;
        for (int s = 0; s < static_cast<int>(part.size()); ++s)
            if (part[static_cast<std::size_t>(s)] < 0) ++free_after;
        prop.q_rev = move_prob(WormMove::pair_ends) /
                     (static_cast<double>(V) * (free_after * (free_after - 1) / 2.0));
        prop.undo = [this, v, a = a, b = b]() {
            auto& pp = config_.partner[static_cast<std::size_t>(v)];
            pp[static_cast<std::size_t>(a)] = b;
            pp[static_cast<std::size_t>(b)] = a;
            refresh_vertex(v);
        };
        return prop;
    }

    WormProposal propose_repair(Rng& rng) {
        const int V = p_.geometry.vertex_count();
        const int v = rng.index(V);
        auto& part = config_.partner[static_cast<std::size_t>(v)];
        std::vector<std::pair<int, int>> elems;  // (a, b) with b = -1 for singleton
        for (int s = 0; s < static_cast<int>(part.size()); ++s) {
            const int q = part[static_cast<std::size_t>(s)];
            if (q < 0) elems.push_back({s, -1});
            else if (q > s) elems.push_back({s, q});
        }
        const int n = static_cast<int>(elems.size());
        if (n < 2) return {};
        int i = rng.index(n), j = rng.index(n - 1);
        if (j >= i) ++j;
        auto e1 = elems[static_cast<std::size_t>(i)];
        auto e2 = elems[static_cast<std::size_t>(j)];
        if (e1.second < 0 && e2.second < 0) return {};  // two singletons: pair_ends territory
        if (e1.second < 0) std::swap(e1, e2);           // e1 is a pair
        const int t = rng.index(2);
        const int u0 = total_unpaired_, k0 = cross_sum_;

        const double w0 = vertex_weight(v);
        std::vector<int> before = part;
        auto link_pair = [&](int a, int b) {
            part[static_cast<std::size_t>(a)] = b;
            part[static_cast<std::size_t>(b)] = a;
        };
        if (e2.second < 0) {
            const int a = e1.first, b = e1.second, c = e2.first;
            part[static_cast<std::size_t>(a)] = -1;
            part[static_cast<std::size_t>(b)] = -1;
            if (t == 0) link_pair(a, c);
            else link_pair(b, c);
        } else {
            const int a = e1.first, b = e1.second, c = e2.first, d = e2.second;
            if (t == 0) {
                link_pair(a, c);
                link_pair(b, d);
            } else {
                link_pair(a, d);
                link_pair(b, c);
            }
        }
        refresh_vertex(v);

        WormProposal prop;
        prop.valid = true;
        prop.move = WormMove::repair_vertex;
        prop.weight_ratio =
            in_class() ? safe_ratio(vertex_weight(v), w0) * bias_ratio(u0, k0) : 0.0;
        const double q = move_prob(WormMove::repair_vertex) /
                         (static_cast<double>(V) * (n * (n - 1) / 2.0) * 2.0);
        prop.q_fwd = q;
        prop.q_rev = q;  // element count preserved; alternatives form an involution family
        prop.undo = [this, v, before]() {
            config_.partner[static_cast<std::size_t>(v)] = before;
            refresh_vertex(v);
        };
        return prop;
    }

    WormProposal propose_recolour_link(Rng& rng) {
        const int E = p_.geometry.edge_count();
        const int N = p_.n_colours;
        const int e = rng.index(E);
        const int m = config_.m(e);
        if (m == 0) return {};
        const int i = rng.index(m);
        const int c = 1 + rng.index(N);
        const auto& ed = p_.geometry.edges()[static_cast<std::size_t>(e)];
        const std::uint8_t c0 = config_.colours[static_cast<std::size_t>(e)][static_cast<std::size_t>(i)];
        const int u0 = total_unpaired_, k0 = cross_sum_;

        const double w_u0 = vertex_weight(ed.u), w_v0 = vertex_weight(ed.v);
        config_.colours[static_cast<std::size_t>(e)][static_cast<std::size_t>(i)] =
            static_cast<std::uint8_t>(c);
        refresh_vertex(ed.u);
        refresh_vertex(ed.v);

        WormProposal prop;
        prop.valid = true;
        prop.move = WormMove::recolour_link;
        prop.weight_ratio = in_class() ? safe_ratio(vertex_weight(ed.u), w_u0) *
                                             safe_ratio(vertex_weight(ed.v), w_v0) *
                                             bias_ratio(u0, k0)
                                       : 0.0;
        const double q = move_prob(WormMove::recolour_link) / (static_cast<double>(E) * m * N);
        prop.q_fwd = q;
        prop.q_rev = q;
        prop.undo = [this, e, i, c0, ed]() {
            config_.colours[static_cast<std::size_t>(e)][static_cast<std::size_t>(i)] = c0;
            refresh_vertex(ed.u);
            refresh_vertex(ed.v);
        };
        return prop;
    }

    WormProposal propose_recolour_component(Rng& rng) {
        const int E = p_.geometry.edge_count();
        const int N = p_.n_colours;
        const int e = rng.index(E);
        const int m = config_.m(e);
        if (m == 0) return {};
        const int i = rng.index(m);
        const int c = 1 + rng.index(N);

        std::vector<LinkRef> comp = component_links({e, i});
        // only monochromatic components: a bi-chromatic loop cannot be
        // reached back by this move, which would break detailed balance
        for (const auto& l : comp)
            if (config_.colour(l) != config_.colour(comp.front())) return {};
        std::vector<int> touched;
        for (const auto& l : comp) {
            const auto& ed = p_.geometry.edges()[static_cast<std::size_t>(l.edge)];
            touched.push_back(ed.u);
            touched.push_back(ed.v);
        }
        std::sort(touched.begin(), touched.end());
        touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
        const int u0 = total_unpaired_, k0 = cross_sum_;

        double w0 = 1.0;
        for (int v : touched) w0 *= vertex_weight(v);
        std::vector<std::uint8_t> old_colours;
        for (const auto& l : comp) old_colours.push_back(config_.colour(l));
        for (const auto& l : comp)
            config_.colours[static_cast<std::size_t>(l.edge)][static_cast<std::size_t>(l.index)] =
                static_cast<std::uint8_t>(c);
        for (int v : touched) refresh_vertex(v);

        WormProposal prop;
        prop.valid = true;
        prop.move = WormMove::recolour_component;
        double w1 = 1.0;
        for (int v : touched) w1 *= vertex_weight(v);
        prop.weight_ratio = in_class() ? safe_ratio(w1, w0) * bias_ratio(u0, k0) : 0.0;
        // component and link counts are colour-independent: symmetric proposal
        prop.q_fwd = 1.0;
        prop.q_rev = 1.0;
        prop.undo = [this, comp, old_colours, touched]() {
            for (std::size_t k = 0; k < comp.size(); ++k)
                config_.colours[static_cast<std::size_t>(comp[k].edge)]
                               [static_cast<std::size_t>(comp[k].index)] = old_colours[k];
            for (int v : touched) refresh_vertex(v);
        };
        return prop;
    }

    std::vector<LinkRef> component_links(LinkRef start) const {
        const auto& g = p_.geometry;
        auto other_end = [&](const LinkRef& l, int v) {
            const auto& ed = g.edges()[static_cast<std::size_t>(l.edge)];
            return ed.u == v ? ed.v : ed.u;
        };
        std::vector<LinkRef> comp;
        for (int side = 0; side < 2; ++side) {
            LinkRef l = start;
            int cur = side == 0 ? g.edges()[static_cast<std::size_t>(start.edge)].u
                                : g.edges()[static_cast<std::size_t>(start.edge)].v;
            bool closed_loop = false;
            std::vector<LinkRef> part;
            for (;;) {
                part.push_back(l);
                const int nxt = other_end(l, cur);
                const int s2 = config_.link_slot(nxt, l);
                const int p2 =
                    config_.partner[static_cast<std::size_t>(nxt)][static_cast<std::size_t>(s2)];
                if (p2 < 0) break;
                l = config_.slot_link(nxt, p2);
                cur = nxt;
                if (l == start &&
                    cur == (side == 0 ? g.edges()[static_cast<std::size_t>(start.edge)].u
                                      : g.edges()[static_cast<std::size_t>(start.edge)].v)) {
                    closed_loop = true;
                    break;
                }
            }
            if (closed_loop) return part;
            if (side == 0) {
                comp = part;
            } else {
                part.erase(part.begin());
                std::reverse(part.begin(), part.end());
                part.insert(part.end(), comp.begin(), comp.end());
                comp = part;
            }
        }
        return comp;
    }

    int pair_count(int v) const {
        const auto& part = config_.partner[static_cast<std::size_t>(v)];
        int c = 0;
        for (int s = 0; s < static_cast<int>(part.size()); ++s)
            if (part[static_cast<std::size_t>(s)] > s) ++c;
        return c;
    }

    static double safe_ratio(double num, double den) {
        if (den == 0.0) return num == 0.0 ? 1.0 : 1e300;
        return num / den;
    }
};

struct WormResult {
    TwoPointTable table;
    double z_fraction = 0.0;
    double acceptance_rate = 0.0;
    std::int64_t measured_sweeps = 0;
};

/// Worm Monte Carlo estimate of the same quantities as enumerate_two_point,
/// translation-averaged, with batched-means standard errors. Deterministic
/// given the seed. At beta = 0 every insertion has zero weight, so all
/// estimates are exactly zero with zero variance.
inline WormResult worm_estimate(const RPMParams& p, TwoPointKind kind, std::int64_t sweeps,
                                std::int64_t burn_in, std::uint64_t seed) {
    if (sweeps < burn_in) throw std::invalid_argument("sweeps < burn_in");
    if (kind == TwoPointKind::crossing && p.n_colours < 2)
        throw std::invalid_argument("crossing estimator requires N >= 2");
    const auto& g = p.geometry;
    const int V = g.vertex_count();
    const int E = g.edge_count();

    std::vector<int> class_of(static_cast<std::size_t>(V));
    std::vector<double> pairs_in_class(static_cast<std::size_t>(V), 0.0);
    for (int x = 0; x < V; ++x) {
        const int nx = g.negate(x);
        class_of[static_cast<std::size_t>(x)] = std::min(x, nx);
        pairs_in_class[static_cast<std::size_t>(x)] = (x == nx && x != 0) ? V / 2.0 : V;
    }

    WormChain chain(p, kind);
    Rng rng(seed);

    const int moves_per_sweep = E + V;
    const std::int64_t measured = sweeps - burn_in;
    constexpr int kBatches = 64;
    std::vector<double> den_b(kBatches, 0.0);
    std::vector<std::vector<double>> num_b(kBatches, std::vector<double>(static_cast<std::size_t>(V), 0.0));
    std::vector<std::vector<double>> p_b(kBatches, std::vector<double>(static_cast<std::size_t>(V), 0.0));

    std::vector<char> conn(static_cast<std::size_t>(V) * static_cast<std::size_t>(V), 0);
    std::int64_t accepted = 0, attempted = 0;
    for (std::int64_t sweep = 0; sweep < sweeps; ++sweep) {
        for (int mvs = 0; mvs < moves_per_sweep; ++mvs) {
            ++attempted;
            if (chain.step(rng)) ++accepted;
        }
        if (sweep < burn_in) continue;
        const int b = static_cast<int>(((sweep - burn_in) * kBatches) / std::max<std::int64_t>(measured, 1));
        const int bi = std::min(b, kBatches - 1);

        const bool no_open = chain.total_unpaired() == 0;
        if (kind == TwoPointKind::crossing) {
            if (no_open && chain.cross_vertex_count() == 0) {
                den_b[static_cast<std::size_t>(bi)] += 1.0;
                const auto dec = trace_loops(chain.config());
                std::fill(conn.begin(), conn.end(), 0);
                for (const auto& loop : dec.loops) {
                    std::vector<int> verts;
                    for (const auto& l : loop) {
                        const auto& ed = g.edges()[static_cast<std::size_t>(l.edge)];
                        verts.push_back(ed.u);
                        verts.push_back(ed.v);
                    }
                    std::sort(verts.begin(), verts.end());
                    verts.erase(std::unique(verts.begin(), verts.end()), verts.end());
                    for (int a : verts)
                        for (int c2 : verts)
                            conn[static_cast<std::size_t>(a) * static_cast<std::size_t>(V) +
                                 static_cast<std::size_t>(c2)] = 1;
                }
                for (int a = 0; a < V; ++a) {
                    if (conn[static_cast<std::size_t>(a) * static_cast<std::size_t>(V) +
                             static_cast<std::size_t>(a)] == 0)
                        continue;
                    p_b[static_cast<std::size_t>(bi)][0] += 1.0;
                    for (int c2 = a + 1; c2 < V; ++c2)
                        if (conn[static_cast<std::size_t>(a) * static_cast<std::size_t>(V) +
                                 static_cast<std::size_t>(c2)]) {
                            const int diff = g.translate(c2, g.negate(a));
                            p_b[static_cast<std::size_t>(bi)][static_cast<std::size_t>(
                                class_of[static_cast<std::size_t>(diff)])] += 1.0;
                        }
                }
            } else if (no_open && chain.cross_vertex_count() == 2) {
                const auto [a, b2] = chain.defect_vertices();
                if (chain.cross_pairs_at(a) == 1 && chain.cross_pairs_at(b2) == 1) {
                    const int diff = g.translate(b2, g.negate(a));
                    num_b[static_cast<std::size_t>(bi)][static_cast<std::size_t>(
                        class_of[static_cast<std::size_t>(diff)])] += 1.0;
                }
            }
        } else {
            if (no_open) {
                den_b[static_cast<std::size_t>(bi)] += 1.0;
            } else if (chain.total_unpaired() == 2 && chain.open_ends_are_colour1()) {
                const auto [a, b2] = chain.open_end_vertices();
                if (a != b2 && a >= 0 && b2 >= 0) {
                    const int diff = g.translate(b2, g.negate(a));
                    num_b[static_cast<std::size_t>(bi)][static_cast<std::size_t>(
                        class_of[static_cast<std::size_t>(diff)])] += 1.0;
                }
            }
        }
    }

    double den_total = 0.0;
    for (double d : den_b) den_total += d;
    if (den_total <= 0.0)
        throw std::runtime_error("worm chain never visited the normalization sector");

    // fugacity corrections: source sector carries eta^2, crossing sector
    // carries kappa^2 relative to the normalization sector
    const double sector_bias =
        kind == TwoPointKind::crossing
            ? WormChain::kCrossFugacity * WormChain::kCrossFugacity
            : WormChain::kEndFugacity * WormChain::kEndFugacity;

    auto ratio_with_err = [&](const std::vector<std::vector<double>>& numsrc, int cls,
                              double norm) {
        double num_total = 0.0;
        for (int b = 0; b < kBatches; ++b)
            num_total += numsrc[static_cast<std::size_t>(b)][static_cast<std::size_t>(cls)];
        const double full = num_total / (den_total * norm);
        double jmean = 0.0;
        std::vector<double> loo(kBatches);
        for (int b = 0; b < kBatches; ++b) {
            const double nb = num_total - numsrc[static_cast<std::size_t>(b)][static_cast<std::size_t>(cls)];
            const double db = den_total - den_b[static_cast<std::size_t>(b)];
            loo[static_cast<std::size_t>(b)] = db > 0.0 ? nb / (db * norm) : full;
            jmean += loo[static_cast<std::size_t>(b)];
        }
        jmean /= kBatches;
        double var = 0.0;
        for (int b = 0; b < kBatches; ++b) {
            const double d = loo[static_cast<std::size_t>(b)] - jmean;
            var += d * d;
        }
        var *= static_cast<double>(kBatches - 1) / static_cast<double>(kBatches);
        return std::pair<double, double>(full, std::sqrt(var));
    };

    WormResult out{TwoPointTable(g.sides(), Provenance::monte_carlo), 0.0, 0.0, measured};
    out.table.stderrs = std::vector<double>(static_cast<std::size_t>(V), 0.0);
    if (kind == TwoPointKind::crossing) {
        out.table.p_connect = std::vector<double>(static_cast<std::size_t>(V), 0.0);
        out.table.p_stderr = std::vector<double>(static_cast<std::size_t>(V), 0.0);
    }
    for (int x = 0; x < V; ++x) {
        const int cls = class_of[static_cast<std::size_t>(x)];
        const double norm = pairs_in_class[static_cast<std::size_t>(x)] * sector_bias;
        if (x == 0) {
            out.table.values[0] = 0.0;  // sources cannot coincide
        } else {
            auto [v, se] = ratio_with_err(num_b, cls, norm);
            out.table.values[static_cast<std::size_t>(x)] = v;
            (*out.table.stderrs)[static_cast<std::size_t>(x)] = se;
        }
        if (kind == TwoPointKind::crossing) {
            auto [pv, pse] = ratio_with_err(
                p_b, cls, x == 0 ? static_cast<double>(V) : pairs_in_class[static_cast<std::size_t>(x)]);
            (*out.table.p_connect)[static_cast<std::size_t>(x)] = pv;
            (*out.table.p_stderr)[static_cast<std::size_t>(x)] = pse;
        }
    }
    out.z_fraction = den_total / static_cast<double>(measured);
    out.acceptance_rate = attempted > 0 ? static_cast<double>(accepted) / static_cast<double>(attempted) : 0.0;
    return out;
}

} // namespace rpmono::rpm
