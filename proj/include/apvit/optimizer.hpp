#pragma once

#include "apvit/config.hpp"
#include "apvit/nn.hpp"

#include <cmath>
#include <vector>

namespace apvit {

template <class S>
bool all_finite(const Mat<S>& m) {
  return m.allFinite();
}

// Adam with two learning rates: one for regular parameters, one for
// prototype vectors.
template <class S>
class Adam {
 public:
  Adam(const std::vector<ParamRefs<S>*>& groups, const TrainConfig& tc)
      : lr_main_(tc.lr_main), lr_proto_(tc.lr_prototypes), b1_(tc.adam_beta1),
        b2_(tc.adam_beta2), eps_(tc.adam_eps) {
    for (auto* g : groups)
      for (auto* p : *g) {
        Slot s;
        s.p = p;
        s.m = Mat<S>::Zero(p->w.rows(), p->w.cols());
        s.v = Mat<S>::Zero(p->w.rows(), p->w.cols());
        slots_.push_back(std::move(s));
      }
  }

  void zero_grads() {
    for (auto& s : slots_) s.p->g.setZero();
  }

  bool grads_finite() const {
    for (const auto& s : slots_)
      if (!all_finite(s.p->g)) return false;
    return true;
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (auto& s : slots_) {
      const double lr = s.p->is_prototype ? lr_proto_ : lr_main_;
      const S a1 = static_cast<S>(b1_), a2 = static_cast<S>(b2_);
      s.m = a1 * s.m + (S(1) - a1) * s.p->g;
      s.v = (a2 * s.v.array() + (S(1) - a2) * s.p->g.array().square()).matrix();
      const double scale = lr / c1;
      s.p->w.array() -=
          static_cast<S>(scale) * s.m.array() /
          ((s.v.array() / static_cast<S>(c2)).sqrt() + static_cast<S>(eps_));
    }
  }

  long step_count() const { return t_; }

 private:
  struct Slot {
    Param<S>* p = nullptr;
    Mat<S> m, v;
  };
  std::vector<Slot> slots_;
  double lr_main_, lr_proto_, b1_, b2_, eps_;
  long t_ = 0;
};

}  // namespace apvit
