#pragma once

// Adam (beta1=0.9, beta2=0.999, eps=1e-8) over a model's parameter walk.
// Moment buffers are kept in the model's canonical parameter order and can be
// round-tripped through the same archive container as model checkpoints, in a
// sidecar file next to the model state; the sidecar also stores the step count
// and the iteration to resume from, so a reloaded run continues bit-exactly.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "wr/checkpoint.hpp"
#include "wr/config_kv.hpp"
#include "wr/errors.hpp"
#include "wr/model.hpp"
#include "wr/tensor.hpp"

namespace wr::optim {

template <typename S>
class Adam {
public:
    explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    double beta1() const { return beta1_; }
    double beta2() const { return beta2_; }
    double eps() const { return eps_; }
    std::int64_t step_count() const { return t_; }

    // One update from the gradients currently on the model's parameters.
    // Parameters with no accumulated gradient this step decay their moments
    // as if the gradient were zero.
    void step(model::Model<S>& m, double lr) {
        ensure_state(m);
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        std::size_t k = 0;
        m.for_each_param([&](const std::string&, Tensor4<S>& p) {
            std::vector<S>& m1 = m_[k];
            std::vector<S>& m2 = v_[k];
            ++k;
            S* w = p.data();
            const S* g = p.grad_or_null();
            const std::size_t n = m1.size();
            for (std::size_t i = 0; i < n; ++i) {
                const double gi = g ? static_cast<double>(g[i]) : 0.0;
                const double nm1 = beta1_ * static_cast<double>(m1[i]) + (1.0 - beta1_) * gi;
                const double nm2 = beta2_ * static_cast<double>(m2[i]) + (1.0 - beta2_) * gi * gi;
                m1[i] = static_cast<S>(nm1);
                m2[i] = static_cast<S>(nm2);
                const double mhat = nm1 / bc1;
                const double vhat = nm2 / bc2;
                w[i] = static_cast<S>(static_cast<double>(w[i]) -
                                      lr * mhat / (std::sqrt(vhat) + eps_));
            }
        });
    }

    // Sidecar serialization. resume_iteration is the training iteration the
    // owner should continue from; it rides along so the trainer state is one
    // file pair.
    void save(const std::string& path, model::Model<S>& m,
              std::int64_t resume_iteration) const {
        ckpt::Archive a;
        a.config = "kind=adam\nbeta1=" + cfg::format_double(beta1_) +
                   "\nbeta2=" + cfg::format_double(beta2_) + "\neps=" + cfg::format_double(eps_) +
                   "\nstep=" + std::to_string(t_) +
                   "\niteration=" + std::to_string(resume_iteration) + "\n";
        std::size_t k = 0;
        m.for_each_param([&](const std::string& name, Tensor4<S>& p) {
            if (k >= m_.size())
                throw ArgumentError("optimizer save: state missing for " + name);
            a.tensors.emplace_back(name + ".m", moment_record(m_[k], p.shape()));
            a.tensors.emplace_back(name + ".v", moment_record(v_[k], p.shape()));
            ++k;
        });
        ckpt::write_archive(path, a);
    }

    // Loads moments for the given model's parameters; returns the stored
    // resume iteration. Name or shape drift is a FormatError.
    std::int64_t load(const std::string& path, model::Model<S>& m) {
        const ckpt::Archive a = ckpt::read_archive(path);
        std::int64_t resume_iteration = 0;
        try {
            cfg::KvMap kv = cfg::parse_kv_text(a.config);
            if (cfg::take_string(kv, "kind", "") != "adam")
                throw FormatError("optimizer state: wrong kind");
            beta1_ = cfg::take_double(kv, "beta1", beta1_);
            beta2_ = cfg::take_double(kv, "beta2", beta2_);
            eps_ = cfg::take_double(kv, "eps", eps_);
            t_ = cfg::take_int(kv, "step", 0);
            resume_iteration = cfg::take_int(kv, "iteration", 0);
            cfg::reject_unknown(kv, "optimizer state");
        } catch (const FormatError&) {
            throw;
        } catch (const Error& e) {
            throw FormatError(std::string("optimizer state header: ") + e.what());
        }
        m_.clear();
        v_.clear();
        std::size_t pos = 0;
        m.for_each_param([&](const std::string& name, Tensor4<S>& p) {
            m_.push_back(take_moment(a, pos++, name + ".m", p.shape()));
            v_.push_back(take_moment(a, pos++, name + ".v", p.shape()));
        });
        if (pos != a.tensors.size())
            throw FormatError("optimizer state: trailing records");
        return resume_iteration;
    }

private:
    void ensure_state(model::Model<S>& m) {
        if (!m_.empty()) return;
        m.for_each_param([&](const std::string&, Tensor4<S>& p) {
            m_.emplace_back(static_cast<std::size_t>(p.numel()), S(0));
            v_.emplace_back(static_cast<std::size_t>(p.numel()), S(0));
        });
    }

    static ckpt::TensorRecord moment_record(const std::vector<S>& buf, Shape4 shape) {
        Tensor4<S> t(shape);
        std::copy(buf.begin(), buf.end(), t.data());
        return ckpt::record_from_tensor<S>(t);
    }

    static std::vector<S> take_moment(const ckpt::Archive& a, std::size_t pos,
                                      const std::string& name, Shape4 shape) {
        if (pos >= a.tensors.size())
            throw FormatError("optimizer state: missing record " + name);
        const auto& [rec_name, rec] = a.tensors[pos];
        if (rec_name != name)
            throw FormatError("optimizer state: expected record " + name + ", found " +
                              rec_name);
        if (rec.shape != shape)
            throw FormatError("optimizer state: shape mismatch for " + name);
        Tensor4<S> t = ckpt::tensor_from_record<S>(rec);
        return std::vector<S>(t.data(), t.data() + t.numel());
    }

    double beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<std::vector<S>> m_;
    std::vector<std::vector<S>> v_;
};

}  // namespace wr::optim
