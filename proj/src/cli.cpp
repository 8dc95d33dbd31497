#include "bimpm/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bimpm/checkpoint.hpp"
#include "bimpm/experiments.hpp"
#include "bimpm/gradcheck.hpp"
#include "bimpm/trainer.hpp"

namespace bimpm
{

namespace
{

using nlohmann::json;

constexpr const char* kDefaultCheckpointDir = "checkpoint";

struct RunOptions
{
    std::string task = "paraphrase";
    std::string train_path;
    std::string dev_path;
    std::string test_path;
    std::string embeddings_path;
    std::string checkpoint_dir;
    std::string log_path;
    std::string output_path;
    std::vector<std::string> ensemble;

    std::uint64_t seed = 1;
    int perspectives = 20;
    int hidden = 100;
    int ff_hidden = 100;
    int word_dim = 300;
    int char_dim = 20;
    int char_hidden = 50;
    double dropout = 0.1;
    double lr = 0.001;
    int epochs = 10;
    int batch_size = 1;
    std::size_t max_len = 100;
    bool lowercase = false;
    bool vanilla_cosine = false;
    bool train_embeddings = false;
    bool no_clip = false;
    double clip_norm = 5.0;
    std::string precision = "64";

    bool only_p2q = false;
    bool only_q2p = false;
    bool no_full = false;
    bool no_maxpool = false;
    bool no_attentive = false;
    bool no_max_attentive = false;
    bool clip_negative_attention = false;

    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::vector<int> levels{1, 5, 10, 15, 20};
    bool no_baseline = false;

    double eps = 1e-5;
    double tol = 1e-4;
};

TaskSchema schema_of(const RunOptions& o) { return TaskSchema::for_task(parse_task(o.task)); }

ParseOptions parse_options(const RunOptions& o)
{
    if (o.max_len < 1)
        throw ConfigError("--max-len must be >= 1");
    return ParseOptions{o.max_len, o.lowercase};
}

MatchConfig match_config(const RunOptions& o)
{
    if (o.only_p2q && o.only_q2p)
        throw ConfigError("--only-p2q and --only-q2p are mutually exclusive");
    MatchConfig m;
    m.p_against_q = !o.only_q2p;
    m.q_against_p = !o.only_p2q;
    m.full = !o.no_full;
    m.maxpool = !o.no_maxpool;
    m.attentive = !o.no_attentive;
    m.max_attentive = !o.no_max_attentive;
    m.clip_negative_attention = o.clip_negative_attention;
    m.validate();
    return m;
}

ModelConfig model_config(const RunOptions& o, const TaskSchema& schema)
{
    ModelConfig c;
    c.task = schema.kind;
    c.num_classes = schema.num_classes();
    c.embed = EmbedDims{o.word_dim, o.char_dim, o.char_hidden};
    c.hidden = o.hidden;
    c.perspectives = o.perspectives;
    c.vanilla_cosine = o.vanilla_cosine;
    c.ff_hidden = o.ff_hidden;
    c.match = match_config(o);
    c.freeze_pretrained = !o.train_embeddings;
    c.seed = o.seed;
    c.validate();
    return c;
}

TrainConfig train_config(const RunOptions& o)
{
    TrainConfig t;
    t.learning_rate = o.lr;
    t.dropout = o.dropout;
    t.epochs = o.epochs;
    t.seed = o.seed;
    t.batch_size = o.batch_size;
    t.clip_gradients = !o.no_clip;
    t.clip_norm = o.clip_norm;
    t.precision = parse_precision(o.precision);
    t.validate();
    return t;
}

void require(const std::string& value, const char* flag)
{
    if (value.empty())
        throw ConfigError(std::string(flag) + " is required");
}

std::optional<EmbeddingTable> load_embeddings(const RunOptions& o)
{
    if (o.embeddings_path.empty())
        return std::nullopt;
    return load_pretrained(o.embeddings_path, o.word_dim);
}

std::string real(double v) { return format_real(v); }

template <typename F>
auto with_precision(Precision p, F&& f)
{
    return p == Precision::F32 ? f(float{}) : f(double{});
}

int cmd_train(const RunOptions& o, std::ostream& out)
{
    require(o.train_path, "--train");
    require(o.dev_path, "--dev");
    const auto schema = schema_of(o);
    const auto mc = model_config(o, schema);
    const auto tc = train_config(o);
    const auto popts = parse_options(o);
    const auto train_set = parse_dataset(o.train_path, schema, popts);
    const auto dev_set = parse_dataset(o.dev_path, schema, popts);
    const auto embeddings = load_embeddings(o);
    const EmbeddingTable* pretrained = embeddings ? &*embeddings : nullptr;

    const std::filesystem::path dir(o.checkpoint_dir.empty() ? kDefaultCheckpointDir : o.checkpoint_dir);
    const std::filesystem::path log_path = o.log_path.empty() ? dir / "metrics.log" : std::filesystem::path(o.log_path);
    std::vector<std::string> log_lines;
    auto on_epoch = [&](const EpochLog& e) {
        json line{{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"dev_metric", e.dev_metric}};
        log_lines.push_back(line.dump());
        out << "epoch=" << e.epoch << " mean_loss=" << real(e.mean_loss) << " dev_metric=" << real(e.dev_metric)
            << "\n";
    };

    auto result = with_precision(tc.precision, [&](auto tag) {
        using S = decltype(tag);
        auto model = build_model<S>(mc, train_set, {&dev_set}, pretrained);
        return train(*model, tc, train_set, dev_set, schema, on_epoch);
    });

    auto& ckpt = result.best;
    ckpt.set("train_path", o.train_path);
    ckpt.set("dev_path", o.dev_path);
    ckpt.set("embeddings_path", o.embeddings_path);
    ckpt.set("max_len", std::to_string(o.max_len));
    ckpt.set("lowercase", o.lowercase ? "true" : "false");
    save_checkpoint(ckpt, dir);

    json summary{{"best_epoch", result.best_epoch},
                 {"metric_name", ckpt.metric_name()},
                 {"best_metric", result.best_metric},
                 {"diverged", result.diverged}};
    log_lines.push_back(summary.dump());
    std::ofstream log(log_path, std::ios::binary);
    if (!log)
        throw DataError("cannot write metrics log " + log_path.string());
    for (const auto& l : log_lines)
        log << l << "\n";

    out << "best_epoch=" << result.best_epoch << " " << ckpt.metric_name() << "=" << real(result.best_metric)
        << " checkpoint=" << dir.string() << "\n";
    if (result.diverged)
        throw NumericError("training diverged: " + result.divergence_message +
                           " (best checkpoint so far was saved)");
    return 0;
}

struct LoadedCheckpoints
{
    std::vector<Checkpoint> checkpoints;
    TaskSchema schema;
    Precision precision = Precision::F64;
    ParseOptions parse;
};

LoadedCheckpoints load_checkpoints(const RunOptions& o, const CLI::App& app)
{
    std::vector<std::string> dirs = o.ensemble;
    if (dirs.empty()) {
        require(o.checkpoint_dir, "--checkpoint or --ensemble");
        dirs.push_back(o.checkpoint_dir);
    } else if (!o.checkpoint_dir.empty()) {
        throw ConfigError("give either --checkpoint or --ensemble, not both");
    }
    LoadedCheckpoints l;
    for (const auto& d : dirs)
        l.checkpoints.push_back(load_checkpoint(d));
    const auto& first = l.checkpoints.front();
    const auto task = first.model_config().task;
    for (const auto& c : l.checkpoints) {
        const auto mc = c.model_config();
        if (mc.task != task)
            throw ConfigError("ensemble members were trained for different tasks");
    }
    if (app.count("--task") && parse_task(o.task) != task)
        throw ConfigError("checkpoint was trained for task '" + std::string(task_name(task)) + "', not '" + o.task +
                          "'");
    l.schema = TaskSchema::for_task(task);
    l.precision = app.count("--precision") ? parse_precision(o.precision) : first.precision();
    l.parse = parse_options(o);
    if (!app.count("--max-len"))
        if (auto v = first.get("max_len"))
            l.parse.max_len = std::stoul(*v);
    if (!app.count("--lowercase"))
        if (auto v = first.get("lowercase"))
            l.parse.lowercase = *v == "true";
    return l;
}

template <typename S>
std::vector<std::vector<double>> distributions(const LoadedCheckpoints& l, const std::vector<SentencePair>& data)
{
    std::vector<std::unique_ptr<Model<S>>> models;
    std::vector<const Model<S>*> members;
    for (const auto& c : l.checkpoints) {
        models.push_back(model_from_checkpoint<S>(c));
        members.push_back(models.back().get());
    }
    std::vector<std::vector<double>> out;
    out.reserve(data.size());
    for (const auto& pair : data) {
        const Matrix<S> d = members.size() == 1 ? members[0]->predict(pair)
                                                : ensemble_predict<S>(std::span<const Model<S>* const>(members), pair);
        out.emplace_back(d.data(), d.data() + d.size());
    }
    return out;
}

int cmd_eval(const RunOptions& o, const CLI::App& app, std::ostream& out)
{
    require(o.test_path, "--test");
    const auto l = load_checkpoints(o, app);
    const auto data = parse_dataset(o.test_path, l.schema, l.parse);
    auto dists = with_precision(l.precision, [&](auto tag) { return distributions<decltype(tag)>(l, data); });
    const auto report = score_distributions(std::move(dists), data, l.schema);

    json j{{"task", task_name(l.schema.kind)},
           {"examples", data.size()},
           {"models", l.checkpoints.size()},
           {"accuracy", report.accuracy},
           {"metric_name", report.metric_name},
           {"metric", report.metric}};
    out << "task=" << task_name(l.schema.kind) << "\n";
    out << "examples=" << data.size() << "\n";
    out << "models=" << l.checkpoints.size() << "\n";
    out << "accuracy=" << real(report.accuracy) << "\n";
    if (report.ranking) {
        const auto& r = *report.ranking;
        out << "map=" << real(r.map) << "\n";
        out << "mrr=" << real(r.mrr) << "\n";
        out << "groups_used=" << r.groups_used << "\n";
        out << "groups_excluded=" << r.groups_excluded << "\n";
        j["map"] = r.map;
        j["mrr"] = r.mrr;
        j["groups_used"] = r.groups_used;
        j["groups_excluded"] = r.groups_excluded;
    }
    if (l.checkpoints.size() == 1 && l.checkpoints[0].get("metric")) {
        const double stored = l.checkpoints[0].metric();
        out << "stored_" << l.checkpoints[0].metric_name() << "=" << real(stored) << "\n";
        j["stored_metric"] = stored;
    }
    out << j.dump() << "\n";
    return 0;
}

int cmd_predict(const RunOptions& o, const CLI::App& app, std::ostream& out)
{
    require(o.test_path, "--test");
    const auto l = load_checkpoints(o, app);
    const auto data = parse_dataset(o.test_path, l.schema, l.parse);
    const auto dists = with_precision(l.precision, [&](auto tag) { return distributions<decltype(tag)>(l, data); });

    std::ofstream file;
    if (!o.output_path.empty()) {
        file.open(o.output_path, std::ios::binary);
        if (!file)
            throw DataError("cannot write " + o.output_path);
    }
    std::ostream& dst = o.output_path.empty() ? out : file;
    dst << "id";
    for (const auto& label : l.schema.labels)
        dst << "\t" << label;
    dst << "\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        dst << data[i].id;
        for (double p : dists[i])
            dst << "\t" << real(p);
        dst << "\n";
    }
    return 0;
}

int run_study(const RunOptions& o, bool ablation, std::ostream& out)
{
    require(o.train_path, "--train");
    require(o.dev_path, "--dev");
    ExperimentSetup setup;
    setup.schema = schema_of(o);
    const auto popts = parse_options(o);
    setup.train = parse_dataset(o.train_path, setup.schema, popts);
    setup.dev = parse_dataset(o.dev_path, setup.schema, popts);
    const auto embeddings = load_embeddings(o);
    setup.pretrained = embeddings ? &*embeddings : nullptr;
    setup.training = train_config(o);
    setup.seeds = o.seeds;

    RunOptions base_opts = o;
    if (ablation) {
        base_opts.only_p2q = base_opts.only_q2p = false;
        base_opts.no_full = base_opts.no_maxpool = base_opts.no_attentive = base_opts.no_max_attentive = false;
    } else {
        base_opts.vanilla_cosine = false;
    }
    const auto base = model_config(base_opts, setup.schema);
    const auto variants = ablation ? ablation_variants(base) : perspective_variants(base, o.levels, !o.no_baseline);

    auto on_run = [&](const std::string& label, std::uint64_t seed, double metric) {
        out << "run label=\"" << label << "\" seed=" << seed << " " << (setup.schema.is_ranking() ? "map" : "accuracy")
            << "=" << real(metric) << "\n";
    };
    const auto table = with_precision(setup.training.precision, [&](auto tag) {
        return run_variants<decltype(tag)>(variants, setup, on_run);
    });
    out << format_table(table);
    out << series_json(table) << "\n";
    if (!table.complete()) {
        const auto& failed = table.rows.back();
        throw NumericError("run '" + failed.label + "' failed: " + *failed.failure);
    }
    return 0;
}

SentencePair gradcheck_pair(const RunOptions& o)
{
    return parse_dataset(o.train_path, schema_of(o), parse_options(o)).front();
}

int cmd_gradcheck(const RunOptions& opts, const CLI::App& app, std::ostream& out)
{
    if (opts.dropout > 0.0 && app.count("--dropout"))
        throw ConfigError("gradcheck needs a deterministic loss; refusing to run with dropout " + real(opts.dropout));
    RunOptions o = opts;
    const auto tiny = tiny_model_instance(o.seed);
    auto keep = [&](const char* flag, int& field, Eigen::Index value) {
        if (!app.count(flag))
            field = static_cast<int>(value);
    };
    keep("--hidden", o.hidden, tiny.config.hidden);
    keep("--perspectives", o.perspectives, tiny.config.perspectives);
    keep("--word-dim", o.word_dim, tiny.config.embed.word);
    keep("--char-dim", o.char_dim, tiny.config.embed.char_embed);
    keep("--char-hidden", o.char_hidden, tiny.config.embed.char_hidden);
    keep("--ff-hidden", o.ff_hidden, tiny.config.ff_hidden);
    o.train_embeddings = true;
    const auto schema = schema_of(o);
    const auto mc = model_config(o, schema);
    const auto pair = o.train_path.empty() ? tiny.pair : gradcheck_pair(o);
    auto embeddings = load_embeddings(o);
    if (!embeddings)
        embeddings = o.word_dim == tiny.config.embed.word && o.train_path.empty()
                         ? tiny.embeddings
                         : check_embeddings(pair, o.word_dim, o.seed);
    const Precision precision = app.count("--precision") ? parse_precision(o.precision) : Precision::F64;

    const auto report = with_precision(precision, [&](auto tag) {
        return check_model_gradients<decltype(tag)>(mc, pair, &*embeddings, o.eps, o.tol);
    });

    json per_param = json::object();
    for (const auto& e : report.entries) {
        out << "param=" << e.name << " max_rel_error=" << real(e.max_relative_error) << " at=" << e.worst_index
            << " analytic=" << real(e.analytic) << " numeric=" << real(e.numeric) << " kinks=" << e.kink_crossings
            << "\n";
        per_param[e.name] = e.max_relative_error;
    }
    out << "worst_param=" << report.worst_name << "\n";
    out << "worst_error=" << real(report.worst_error) << "\n";
    out << "tolerance=" << real(report.tolerance) << "\n";
    out << "kink_crossings=" << report.kink_crossings << "\n";
    out << "smooth_worst_error=" << real(report.smooth_worst_error) << "\n";
    out << "status=" << (report.passed ? "pass" : "fail") << "\n";
    out << json{{"worst_param", report.worst_name},
                {"worst_error", report.worst_error},
                {"tolerance", report.tolerance},
                {"kink_crossings", report.kink_crossings},
                {"smooth_worst_error", report.smooth_worst_error},
                {"passed", report.passed},
                {"params", per_param}}
               .dump()
        << "\n";
    if (!report.passed)
        throw VerificationError("gradient check failed: " + report.worst_name + " relative error " +
                                real(report.worst_error) + " exceeds " + real(report.tolerance));
    return 0;
}

void add_options(CLI::App& app, RunOptions& o)
{
    app.add_option("--task", o.task, "paraphrase | nli | ranking")->capture_default_str();
    app.add_option("--train", o.train_path, "training TSV");
    app.add_option("--dev", o.dev_path, "dev TSV (model selection)");
    app.add_option("--test", o.test_path, "evaluation / prediction TSV");
    app.add_option("--embeddings", o.embeddings_path, "pretrained word vectors (token v1 ... vD per line)");
    app.add_option("--checkpoint", o.checkpoint_dir,
                   "checkpoint directory (train default: " + std::string(kDefaultCheckpointDir) + ")");
    app.add_option("--ensemble", o.ensemble, "comma-separated checkpoint directories to average")->delimiter(',');
    app.add_option("--log", o.log_path, "metrics log path (default <checkpoint>/metrics.log)");
    app.add_option("--output", o.output_path, "write predictions here instead of stdout");

    app.add_option("--seed", o.seed, "random seed")->capture_default_str();
    app.add_option("--perspectives", o.perspectives, "perspectives per matching matrix")->capture_default_str();
    app.add_option("--hidden", o.hidden, "BiLSTM hidden size")->capture_default_str();
    app.add_option("--ff-hidden", o.ff_hidden, "prediction layer hidden size")->capture_default_str();
    app.add_option("--word-dim", o.word_dim, "word vector size (must match --embeddings)")->capture_default_str();
    app.add_option("--char-dim", o.char_dim, "character embedding size")->capture_default_str();
    app.add_option("--char-hidden", o.char_hidden, "character LSTM size")->capture_default_str();
    app.add_option("--dropout", o.dropout, "dropout ratio")->capture_default_str();
    app.add_option("--lr", o.lr, "ADAM learning rate")->capture_default_str();
    app.add_option("--epochs", o.epochs, "training epochs")->capture_default_str();
    app.add_option("--batch-size", o.batch_size, "examples per optimizer step")->capture_default_str();
    app.add_option("--max-len", o.max_len, "truncate sentences to this many tokens")->capture_default_str();
    app.add_option("--precision", o.precision, "32 | 64")->capture_default_str();
    app.add_option("--clip-norm", o.clip_norm, "global gradient-norm limit")->capture_default_str();
    app.add_flag("--no-clip", o.no_clip, "disable gradient clipping");
    app.add_flag("--lowercase", o.lowercase, "lowercase ASCII letters when tokenising");
    app.add_flag("--vanilla-cosine", o.vanilla_cosine, "plain cosine in place of multi-perspective matching");
    app.add_flag("--train-embeddings", o.train_embeddings, "update pretrained word vectors");

    auto* p2q = app.add_flag("--only-p2q", o.only_p2q, "match P against Q only");
    auto* q2p = app.add_flag("--only-q2p", o.only_q2p, "match Q against P only");
    p2q->excludes(q2p);
    app.add_flag("--no-full", o.no_full, "disable full matching");
    app.add_flag("--no-maxpool", o.no_maxpool, "disable maxpooling matching");
    app.add_flag("--no-attentive", o.no_attentive, "disable attentive matching");
    app.add_flag("--no-max-attentive", o.no_max_attentive, "disable max-attentive matching");
    app.add_flag("--clip-negative-attention", o.clip_negative_attention, "zero negative attention weights");

    app.add_option("--seeds", o.seeds, "seeds for ablate / sweep")->delimiter(',')->capture_default_str();
    app.add_option("--levels", o.levels, "perspective counts for sweep")->delimiter(',')->capture_default_str();
    app.add_flag("--no-baseline", o.no_baseline, "omit the plain-cosine point from sweep");
    app.add_option("--eps", o.eps, "finite-difference step for gradcheck")->capture_default_str();
    app.add_option("--tol", o.tol, "relative-error tolerance for gradcheck")->capture_default_str();
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Sentence-pair classifier and ranker (BiLSTM encoders, matching in both directions)", "bimpm"};
    app.fallthrough();
    app.require_subcommand(1);
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.set_config("--config", "", "INI/TOML file of flag defaults")->envname("BIMPM_CONFIG");

    RunOptions opts;
    add_options(app, opts);
    auto* train_cmd = app.add_subcommand("train", "train a model and save the best dev checkpoint");
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint or an ensemble");
    auto* predict_cmd = app.add_subcommand("predict", "write per-example label distributions as TSV");
    auto* ablate_cmd = app.add_subcommand("ablate", "direction and strategy ablation table");
    auto* sweep_cmd = app.add_subcommand("sweep", "dev metric against the number of perspectives");
    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference check of the full model");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : static_cast<int>(ErrorKind::Config);
    }

    try {
        if (train_cmd->parsed())
            return cmd_train(opts, out);
        if (eval_cmd->parsed())
            return cmd_eval(opts, app, out);
        if (predict_cmd->parsed())
            return cmd_predict(opts, app, out);
        if (ablate_cmd->parsed())
            return run_study(opts, true, out);
        if (sweep_cmd->parsed())
            return run_study(opts, false, out);
        if (gradcheck_cmd->parsed())
            return cmd_gradcheck(opts, app, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(ErrorKind::Data);
    }
    return static_cast<int>(ErrorKind::Config);
}

} // namespace bimpm
