#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace supernotes {

// Plain feed-forward network: affine layers with rectifier activations on all
// hidden layers and raw logits at the output. Column-major batches, one sample
// per column.
template <typename Scalar>
class Mlp {
public:
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    struct Layer {
        Matrix w;  // out x in
        Vector b;
    };

    Mlp() = default;

    // widths = {input, hidden..., output}; weights zero-initialized.
    explicit Mlp(const std::vector<int>& widths) {
        if (widths.size() < 2) throw std::invalid_argument("Mlp needs at least two widths");
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            layers_.push_back({Matrix::Zero(widths[l + 1], widths[l]),
                               Vector::Zero(widths[l + 1])});
        }
    }

    // Fan-in-scaled uniform init, biases zero.
    static Mlp seeded(const std::vector<int>& widths, std::uint64_t seed) {
        Mlp net(widths);
        std::mt19937_64 rng(seed);
        for (Layer& layer : net.layers_) {
            const Scalar bound = Scalar(1) / std::sqrt(Scalar(layer.w.cols()));
            std::uniform_real_distribution<double> dist(-double(bound), double(bound));
            for (Eigen::Index j = 0; j < layer.w.cols(); ++j) {
                for (Eigen::Index i = 0; i < layer.w.rows(); ++i) {
                    layer.w(i, j) = Scalar(dist(rng));
                }
            }
        }
        return net;
    }

    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }

    Eigen::Index input_dim() const { return layers_.front().w.cols(); }
    Eigen::Index output_dim() const { return layers_.back().w.rows(); }

    Matrix forward(const Eigen::Ref<const Matrix>& x) const {
        Matrix a = x;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            Matrix z = (layers_[l].w * a).colwise() + layers_[l].b;
            if (l + 1 < layers_.size()) z = z.cwiseMax(Scalar(0));
            a = std::move(z);
        }
        return a;
    }

    // Mean weighted cross-entropy over the batch; fills per-layer gradients
    // when grads is non-null.
    Scalar loss_and_gradient(const Eigen::Ref<const Matrix>& x, const std::vector<int>& y,
                             const Vector& class_weights, std::vector<Layer>* grads) const {
        const auto n = x.cols();
        if (static_cast<std::size_t>(n) != y.size()) {
            throw std::invalid_argument("batch size mismatch between features and labels");
        }

        // Forward pass keeping activations.
        std::vector<Matrix> acts;
        acts.reserve(layers_.size() + 1);
        acts.push_back(x);
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            Matrix z = (layers_[l].w * acts.back()).colwise() + layers_[l].b;
            if (l + 1 < layers_.size()) z = z.cwiseMax(Scalar(0));
            acts.push_back(std::move(z));
        }
        const Matrix& logits = acts.back();

        // Log-sum-exp softmax loss and dL/dlogits in one sweep.
        Matrix dz = Matrix::Zero(logits.rows(), n);
        Scalar total = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            const Scalar m = logits.col(j).maxCoeff();
            const Vector shifted = logits.col(j).array() - m;
            const Scalar lse = m + std::log(shifted.array().exp().sum());
            const Scalar weight = class_weights[y[j]];
            total += weight * (lse - logits(y[j], j));
            if (grads) {
                Vector p = (logits.col(j).array() - lse).exp();
                p[y[j]] -= Scalar(1);
                dz.col(j) = (weight / Scalar(n)) * p;
            }
        }
        const Scalar loss = total / Scalar(n);
        if (!grads) return loss;

        grads->clear();
        grads->resize(layers_.size());
        for (std::size_t li = layers_.size(); li-- > 0;) {
            (*grads)[li].w = dz * acts[li].transpose();
            (*grads)[li].b = dz.rowwise().sum();
            if (li > 0) {
                Matrix da = layers_[li].w.transpose() * dz;
                dz = da.cwiseProduct(
                    (acts[li].array() > Scalar(0)).template cast<Scalar>().matrix());
            }
        }
        return loss;
    }

    Scalar loss(const Eigen::Ref<const Matrix>& x, const std::vector<int>& y,
                const Vector& class_weights) const {
        return loss_and_gradient(x, y, class_weights, nullptr);
    }

private:
    std::vector<Layer> layers_;
};

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(
    const Eigen::MatrixBase<Derived>& logits) {
    using Scalar = typename Derived::Scalar;
    const Scalar m = logits.maxCoeff();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> e = (logits.array() - m).exp();
    return e / e.sum();
}

}  // namespace supernotes
