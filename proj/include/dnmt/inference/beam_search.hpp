#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "dnmt/corpus/vocabulary.hpp"
#include "dnmt/error.hpp"

namespace dnmt::inference {

using corpus::TokenId;

// ((5 + length) / 6)^alpha
double length_penalty(std::size_t length, double alpha);

struct BeamOptions {
  std::size_t width = 5;
  double alpha = 0.6;
  std::size_t max_len = 0;  // generated tokens incl. eos; 0 means 2 * source length + 10
};

template <typename State>
struct Hypothesis {
  std::vector<TokenId> tokens;  // generated tokens; ends with eos when finished
  double log_prob = 0;
  bool finished = false;
  State state;                  // decoder state after feeding bos and every non-eos token

  double score(double alpha) const {
    return log_prob / length_penalty(std::max<std::size_t>(tokens.size(), 1), alpha);
  }
};

// Beam search over any incremental scorer. The scorer provides
//   State start() const;
//   std::vector<double> advance(State&, TokenId) const;
// where advance feeds one token and returns log-probabilities of the next.
// Pad and bos are never generated.
//
// Every step ranks all extensions of the active hypotheses by cumulative
// log-probability (lower token sequence first on ties) and keeps the best
// `width`. Extensions ending in eos move to the finished set; the others
// stay active, so the beam shrinks as hypotheses finish. The result is the
// finished hypothesis with the highest length-penalized score, or the best
// active one when nothing finished within max_len.
template <typename Scorer>
Hypothesis<typename Scorer::State> beam_search(const Scorer& scorer, const BeamOptions& options) {
  using State = typename Scorer::State;
  using Hyp = Hypothesis<State>;
  if (options.width == 0) throw ContractError("beam width must be at least 1");
  if (options.max_len == 0) throw ContractError("max_len must be at least 1");

  struct Live {
    Hyp hyp;
    std::vector<double> next;  // log-probs of the following token
  };
  struct Candidate {
    std::size_t parent;
    TokenId token;
    double log_prob;
  };

  std::vector<Live> active(1);
  active[0].hyp.state = scorer.start();
  active[0].next = scorer.advance(active[0].hyp.state, corpus::kBosId);

  auto better_penalized = [&](const Hyp& a, const Hyp& b) {
    const double sa = a.score(options.alpha), sb = b.score(options.alpha);
    if (sa != sb) return sa > sb;
    return a.tokens < b.tokens;
  };

  std::optional<Hyp> best_finished;
  for (std::size_t t = 1; t <= options.max_len && !active.empty(); ++t) {
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < active.size(); ++i) {
      const auto& lp = active[i].next;
      for (std::size_t v = 0; v < lp.size(); ++v) {
        const auto tok = static_cast<TokenId>(v);
        if (tok == corpus::kPadId || tok == corpus::kBosId) continue;
        cands.push_back({i, tok, active[i].hyp.log_prob + lp[v]});
      }
    }
    // Candidates of one step all have length t, so raw and penalized
    // orders agree.
    auto before = [&](const Candidate& a, const Candidate& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      const auto& ta = active[a.parent].hyp.tokens;
      const auto& tb = active[b.parent].hyp.tokens;
      if (ta != tb) return ta < tb;
      return a.token < b.token;
    };
    const std::size_t keep = std::min(options.width, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep),
                      cands.end(), before);
    cands.resize(keep);

    std::vector<Live> next_active;
    for (const auto& c : cands) {
      Live live{active[c.parent].hyp, {}};
      live.hyp.tokens.push_back(c.token);
      live.hyp.log_prob = c.log_prob;
      if (c.token == corpus::kEosId) {
        live.hyp.finished = true;
        if (!best_finished || better_penalized(live.hyp, *best_finished)) {
          best_finished = std::move(live.hyp);
        }
        continue;
      }
      if (t < options.max_len) live.next = scorer.advance(live.hyp.state, c.token);
      next_active.push_back(std::move(live));
    }
    active = std::move(next_active);

    // With alpha >= 0 an active hypothesis can at best keep its current
    // log-probability and reach the largest penalty at max_len.
    if (best_finished && options.alpha >= 0 && !active.empty()) {
      const double bound_pen = length_penalty(options.max_len, options.alpha);
      bool hopeless = true;
      for (const auto& a : active) {
        if (a.hyp.log_prob / bound_pen >= best_finished->score(options.alpha)) {
          hopeless = false;
          break;
        }
      }
      if (hopeless) break;
    }
  }
  if (best_finished) return *best_finished;
  if (active.empty()) throw Error("beam search produced no hypothesis");
  const Hyp* best = &active.front().hyp;
  for (const auto& a : active) {
    if (better_penalized(a.hyp, *best)) best = &a.hyp;
  }
  return *best;
}

// Greedy argmax decoding with the same exclusions and tie rule.
template <typename Scorer>
Hypothesis<typename Scorer::State> greedy_search(const Scorer& scorer, std::size_t max_len) {
  Hypothesis<typename Scorer::State> h;
  h.state = scorer.start();
  auto lp = scorer.advance(h.state, corpus::kBosId);
  for (std::size_t t = 1; t <= max_len; ++t) {
    std::size_t best = lp.size();
    for (std::size_t v = 0; v < lp.size(); ++v) {
      const auto tok = static_cast<TokenId>(v);
      if (tok == corpus::kPadId || tok == corpus::kBosId) continue;
      if (best == lp.size() || lp[v] > lp[best]) best = v;
    }
    const auto tok = static_cast<TokenId>(best);
    h.tokens.push_back(tok);
    h.log_prob += lp[best];
    if (tok == corpus::kEosId) {
      h.finished = true;
      break;
    }
    if (t < max_len) lp = scorer.advance(h.state, tok);
  }
  return h;
}

}  // namespace dnmt::inference
