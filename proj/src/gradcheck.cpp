#include "bimpm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace bimpm
{

namespace
{

std::string exact(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Discrete choices made by a forward pass: max / argmax positions, gathered rows and relu masks.
template <typename Scalar>
std::vector<Eigen::Index> branch_pattern(const Graph<Scalar>& g)
{
    std::vector<Eigen::Index> out;
    for (std::size_t id = 0; id < g.size(); ++id) {
        const auto& n = g.node(static_cast<int>(id));
        switch (n.op) {
        case Op::GatherRows:
        case Op::MaxReduce:
        case Op::SegmentMax:
            out.insert(out.end(), n.index.begin(), n.index.end());
            break;
        case Op::Relu:
            for (Eigen::Index k = 0; k < n.value.size(); ++k)
                out.push_back(n.value.data()[k] > Scalar(0));
            break;
        default:
            break;
        }
    }
    return out;
}

} // namespace

template <typename Scalar>
GradCheckReport grad_check(const LossBuilder<Scalar>& build_loss, ParamStore<Scalar>& params, double eps, double tol)
{
    if (!(eps > 0.0))
        throw ConfigError("grad_check: eps must be > 0");
    struct Probe
    {
        double loss;
        std::vector<Eigen::Index> pattern;
    };
    auto evaluate = [&] {
        Graph<Scalar> g;
        const double loss = static_cast<double>(build_loss(g).scalar());
        return Probe{loss, branch_pattern(g)};
    };

    params.zero_grad();
    double base = 0.0;
    {
        Graph<Scalar> g;
        auto loss = build_loss(g);
        base = static_cast<double>(loss.scalar());
        g.backward(loss);
    }
    const Probe again = evaluate();
    if (again.loss != base)
        throw VerificationError("grad_check: loss builder is not deterministic (" + exact(base) + " vs " +
                                exact(again.loss) + ")");

    GradCheckReport report;
    report.tolerance = tol;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (!p.trainable)
            continue;
        GradCheckEntry entry;
        entry.name = p.name;
        for (Eigen::Index k = 0; k < p.value.size(); ++k) {
            Scalar& x = p.value.data()[k];
            const Scalar saved = x;
            x = saved + Scalar(eps);
            const Probe up = evaluate();
            x = saved - Scalar(eps);
            const Probe down = evaluate();
            x = saved;
            const double numeric = (up.loss - down.loss) / (2.0 * eps);
            const double analytic = static_cast<double>(p.grad.data()[k]);
            const double err =
                std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            if (err > entry.max_relative_error || k == 0) {
                entry.max_relative_error = err;
                entry.worst_index = k;
                entry.analytic = analytic;
                entry.numeric = numeric;
            }
            if (up.pattern != again.pattern || down.pattern != again.pattern)
                ++entry.kink_crossings;
            else
                entry.smooth_max_relative_error = std::max(entry.smooth_max_relative_error, err);
        }
        report.kink_crossings += entry.kink_crossings;
        report.smooth_worst_error = std::max(report.smooth_worst_error, entry.smooth_max_relative_error);
        if (entry.max_relative_error >= report.worst_error || report.worst_name.empty()) {
            report.worst_error = entry.max_relative_error;
            report.worst_name = entry.name;
        }
        report.entries.push_back(std::move(entry));
    }
    report.passed = report.worst_error < tol;
    return report;
}

ModelCheckInstance tiny_model_instance(std::uint64_t seed)
{
    ModelCheckInstance inst;
    inst.config.hidden = 4;
    inst.config.perspectives = 2;
    inst.config.embed = EmbedDims{5, 3, 3};
    inst.config.ff_hidden = 4;
    inst.config.freeze_pretrained = false;
    inst.config.seed = seed;
    inst.pair = SentencePair{"check", {"the", "cat", "sat"}, {"a", "cat", "sat", "down"}, 1, {}};
    inst.embeddings = check_embeddings(inst.pair, inst.config.embed.word, seed);
    return inst;
}

EmbeddingTable check_embeddings(const SentencePair& pair, Eigen::Index dim, std::uint64_t seed)
{
    std::vector<std::string> tokens;
    for (const auto* side : {&pair.p, &pair.q})
        for (const auto& t : *side)
            if (std::find(tokens.begin(), tokens.end(), t) == tokens.end() && t != pair.q.back())
                tokens.push_back(t);
    EmbeddingTable table;
    table.matrix = Matrix<float>(static_cast<Eigen::Index>(tokens.size()), dim);
    Rng rng = derive_rng(seed, "check-embeddings");
    fill_uniform(table.matrix, 1.0, rng);
    table.trainable = true;
    for (auto& t : tokens) {
        table.vocab.emplace(t, static_cast<Eigen::Index>(table.tokens.size()));
        table.tokens.push_back(std::move(t));
    }
    return table;
}

template <typename Scalar>
GradCheckReport check_model_gradients(const ModelConfig& config, const SentencePair& pair,
                                      const EmbeddingTable* embeddings, double eps, double tol)
{
    auto model = build_model<Scalar>(config, {pair}, {}, embeddings);
    const int gold = pair.label;
    LossBuilder<Scalar> loss = [&](Graph<Scalar>& g) {
        const auto dist = model->forward(g, pair);
        if (gold < 0 || gold >= dist.cols())
            throw DataError("check pair label outside the label set");
        return neg_log_pick(dist, gold);
    };
    return grad_check(loss, model->params(), eps, tol);
}

template GradCheckReport check_model_gradients<float>(const ModelConfig&, const SentencePair&, const EmbeddingTable*,
                                                      double, double);
template GradCheckReport check_model_gradients<double>(const ModelConfig&, const SentencePair&, const EmbeddingTable*,
                                                       double, double);

template GradCheckReport grad_check(const LossBuilder<float>&, ParamStore<float>&, double, double);
template GradCheckReport grad_check(const LossBuilder<double>&, ParamStore<double>&, double, double);

} // namespace bimpm
