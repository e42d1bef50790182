#include "orbcorr/neural/training.hpp"

#include "orbcorr/errors.hpp"
#include "orbcorr/util/hash.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace orbcorr::nn {

namespace {

double parse_double(std::string_view s, const std::string& where) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ConfigError(fmt::format("{}: cannot parse number '{}'", where, s));
    }
    return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

// Sequences normalized once per fold, laid out feature x step.
struct Normalized {
    std::vector<MatrixXd> x;
    std::vector<MatrixXd> y;
};

Normalized normalize(const SequenceDataset& data, const Normalization& n) {
    Normalized out;
    for (const auto& s : data.sequences) {
        MatrixXd x = s.features.transpose();
        x = ((x.colwise() - n.in_mean).array().colwise() / n.in_std.array()).matrix();
        MatrixXd y = s.targets.transpose();
        y = ((y.colwise() - n.out_mean).array().colwise() / n.out_std.array()).matrix();
        out.x.push_back(std::move(x));
        out.y.push_back(std::move(y));
    }
    return out;
}

void gather(const Normalized& nd, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end,
            std::vector<MatrixXd>& x, std::vector<MatrixXd>& y) {
    const Eigen::Index steps = nd.x[idx[begin]].cols();
    const Eigen::Index batch = static_cast<Eigen::Index>(end - begin);
    x.assign(steps, MatrixXd(nd.x[idx[begin]].rows(), batch));
    y.assign(steps, MatrixXd(nd.y[idx[begin]].rows(), batch));
    for (Eigen::Index t = 0; t < steps; ++t) {
        for (Eigen::Index b = 0; b < batch; ++b) {
            x[t].col(b) = nd.x[idx[begin + b]].col(t);
            y[t].col(b) = nd.y[idx[begin + b]].col(t);
        }
    }
}

Dims dims_for(const SequenceDataset& data, const TrainingHyper& h) {
    return {data.input_dim(), h.hidden, h.layers, data.output_dim(), h.cell};
}

double evaluate_normalized(const Model& model, const Normalized& nd, const std::vector<std::size_t>& idx,
                           const VectorXd& lambda) {
    if (idx.empty()) return 0.0;
    std::vector<MatrixXd> x, y;
    double total = 0.0;
    std::size_t count = 0;
    constexpr std::size_t chunk = 256;
    for (std::size_t b = 0; b < idx.size(); b += chunk) {
        const std::size_t e = std::min(idx.size(), b + chunk);
        gather(nd, idx, b, e, x, y);
        total += loss(model.forward(x), y, lambda) * static_cast<double>(e - b);
        count += e - b;
    }
    return total / static_cast<double>(count);
}

std::vector<double> fit_normalized(Model& model, const Normalized& nd,
                                   const std::vector<std::size_t>& train_idx,
                                   const TrainingHyper& hyper, std::uint64_t seed,
                                   const EpochCallback& on_epoch) {
    std::mt19937_64 rng(seed);
    Params grads = Params::zeros(model.dims());
    AdamState adam = adam_init(grads);
    const AdamConfig cfg{hyper.learning_rate};
    std::vector<std::size_t> order = train_idx;
    std::vector<MatrixXd> x, y;
    std::vector<double> history;
    const std::size_t bs = static_cast<std::size_t>(hyper.batch_size);
    for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        for (std::size_t b = 0; b < order.size(); b += bs) {
            const std::size_t e = std::min(order.size(), b + bs);
            gather(nd, order, b, e, x, y);
            grads.set_zero();
            const double l = model.loss_and_gradient(x, y, hyper.lambda, grads, hyper.dropout, &rng);
            clip_gradients(grads, hyper.grad_clip);
            adam_step(model.params(), grads, adam, cfg);
            sum += l * static_cast<double>(e - b);
        }
        const double mean = sum / static_cast<double>(order.size());
        history.push_back(mean);
        if (on_epoch) on_epoch(epoch, mean);
        if (hyper.target_loss > 0.0 && mean < hyper.target_loss) break;
    }
    return history;
}

}  // namespace

int SequenceDataset::input_dim() const {
    return sequences.empty() ? 0 : static_cast<int>(sequences.front().features.cols());
}

int SequenceDataset::output_dim() const {
    return sequences.empty() ? 0 : static_cast<int>(sequences.front().targets.cols());
}

void SequenceDataset::validate() const {
    if (sequences.empty()) throw ConfigError("dataset is empty");
    const auto steps = sequences.front().features.rows();
    for (const auto& s : sequences) {
        if (s.features.cols() != input_dim() || s.targets.cols() != output_dim()) {
            throw ConfigError(fmt::format("sequence {} has mismatched dimensions", s.id));
        }
        if (s.features.rows() < 2 || s.features.rows() != s.targets.rows()) {
            throw ConfigError(fmt::format("sequence {} needs T >= 2 feature and target rows", s.id));
        }
        if (s.features.rows() != steps) {
            throw ConfigError(fmt::format("sequence {} has {} steps, expected {}", s.id, s.features.rows(), steps));
        }
        if (!s.features.allFinite() || !s.targets.allFinite()) {
            throw ConfigError(fmt::format("sequence {} contains non-finite values", s.id));
        }
    }
}

void SequenceDataset::save(const std::string& path) const {
    validate();
    std::ofstream out(path);
    if (!out) throw Error(fmt::format("cannot write dataset {}", path));
    nlohmann::json h = header;
    h["input_dim"] = input_dim();
    h["output_dim"] = output_dim();
    h["sequences"] = sequences.size();
    out << "# " << h.dump() << '\n';
    std::string line = "seq_id,t";
    for (int k = 0; k < input_dim(); ++k) line += fmt::format(",f{}", k);
    for (int k = 0; k < output_dim(); ++k) line += fmt::format(",y{}", k);
    out << line << '\n';
    for (const auto& s : sequences) {
        for (Eigen::Index t = 0; t < s.features.rows(); ++t) {
            line = fmt::format("{},{}", s.id, t);
            for (Eigen::Index k = 0; k < s.features.cols(); ++k) line += fmt::format(",{}", s.features(t, k));
            for (Eigen::Index k = 0; k < s.targets.cols(); ++k) line += fmt::format(",{}", s.targets(t, k));
            out << line << '\n';
        }
    }
}

SequenceDataset SequenceDataset::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot open dataset {}", path));
    SequenceDataset d;
    std::string line;
    if (!std::getline(in, line) || line.rfind("# ", 0) != 0) {
        throw ConfigError(fmt::format("{}: missing '# <json>' header line", path));
    }
    try {
        d.header = nlohmann::json::parse(line.substr(2));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(fmt::format("{}: bad header: {}", path, e.what()));
    }
    const int in_dim = d.header.value("input_dim", 0);
    const int out_dim = d.header.value("output_dim", 0);
    if (in_dim < 1 || out_dim < 1) throw ConfigError(fmt::format("{}: header lacks dimensions", path));
    std::getline(in, line);  // column names

    std::vector<std::vector<double>> rows;
    int current = std::numeric_limits<int>::min();
    auto flush = [&]() {
        if (rows.empty()) return;
        Sequence s;
        s.id = current;
        s.features.resize(static_cast<Eigen::Index>(rows.size()), in_dim);
        s.targets.resize(static_cast<Eigen::Index>(rows.size()), out_dim);
        for (std::size_t t = 0; t < rows.size(); ++t) {
            for (int k = 0; k < in_dim; ++k) s.features(t, k) = rows[t][k];
            for (int k = 0; k < out_dim; ++k) s.targets(t, k) = rows[t][in_dim + k];
        }
        d.sequences.push_back(std::move(s));
        rows.clear();
    };
    std::size_t lineno = 2;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (static_cast<int>(cells.size()) != 2 + in_dim + out_dim) {
            throw ConfigError(fmt::format("{}:{}: expected {} columns, found {}", path, lineno,
                                          2 + in_dim + out_dim, cells.size()));
        }
        const std::string where = fmt::format("{}:{}", path, lineno);
        const int id = static_cast<int>(parse_double(cells[0], where));
        if (id != current) {
            flush();
            current = id;
        }
        std::vector<double> vals;
        vals.reserve(cells.size() - 2);
        for (std::size_t k = 2; k < cells.size(); ++k) vals.push_back(parse_double(cells[k], where));
        rows.push_back(std::move(vals));
    }
    flush();
    d.validate();
    return d;
}

void TrainingHyper::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
    if (!(grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (folds < 2) throw ConfigError("folds must be >= 2");
    if (layers < 1 || hidden < 1) throw ConfigError("layers and hidden units must be >= 1");
    if (lambda.size() < 1 || (lambda.array() <= 0.0).any()) throw ConfigError("lambda entries must be positive");
}

nlohmann::json TrainingHyper::to_json() const {
    return {{"learning_rate", learning_rate}, {"batch_size", batch_size}, {"dropout", dropout},
            {"grad_clip", grad_clip},         {"epochs", epochs},         {"folds", folds},
            {"seed", seed},
            {"lambda", std::vector<double>(lambda.data(), lambda.data() + lambda.size())},
            {"layers", layers},               {"hidden", hidden},         {"cell", to_string(cell)},
            {"target_loss", target_loss}};
}

TrainingHyper TrainingHyper::from_json(const nlohmann::json& j) {
    TrainingHyper h;
    static const char* const keys[] = {"learning_rate", "batch_size", "dropout", "grad_clip", "epochs", "folds",
                                       "seed", "lambda", "layers", "hidden", "cell", "target_loss"};
    if (!j.is_object()) throw ConfigError("training config must be an object");
    for (const auto& [k, v] : j.items()) {
        if (std::find(std::begin(keys), std::end(keys), k) == std::end(keys)) {
            throw ConfigError(fmt::format("training config: unknown key '{}'", k));
        }
    }
    try {
        h.learning_rate = j.value("learning_rate", h.learning_rate);
        h.batch_size = j.value("batch_size", h.batch_size);
        h.dropout = j.value("dropout", h.dropout);
        h.grad_clip = j.value("grad_clip", h.grad_clip);
        h.epochs = j.value("epochs", h.epochs);
        h.folds = j.value("folds", h.folds);
        h.seed = j.value("seed", h.seed);
        if (j.contains("lambda")) {
            const auto l = j.at("lambda").get<std::vector<double>>();
            h.lambda = Eigen::Map<const VectorXd>(l.data(), static_cast<Eigen::Index>(l.size()));
        }
        h.layers = j.value("layers", h.layers);
        h.hidden = j.value("hidden", h.hidden);
        h.cell = cell_from_string(j.value("cell", std::string("lstm")));
        h.target_loss = j.value("target_loss", h.target_loss);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("bad training config: {}", e.what()));
    }
    h.validate();
    return h;
}

std::string CrossValReport::to_csv() const {
    std::string out = fmt::format(
        "# lr={} batch={} dropout={} clip={} layers={} units={} cell={} folds={} epochs={} seed={} "
        "config_hash={} version={}\n",
        hyper.learning_rate, hyper.batch_size, hyper.dropout, hyper.grad_clip, hyper.layers,
        hyper.hidden, to_string(hyper.cell), hyper.folds, hyper.epochs, hyper.seed, config_hash,
        util::kVersion);
    out += "fold,epoch,train_loss,val_loss\n";
    for (const auto& r : rows) out += fmt::format("{},{},{},{}\n", r.fold, r.epoch, r.train_loss, r.val_loss);
    out += fmt::format("# best_fold={} best_val_loss={}\n", best_fold, best_val_loss);
    return out;
}

void CrossValReport::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error(fmt::format("cannot write report {}", path));
    out << to_csv();
}

Normalization compute_normalization(const SequenceDataset& data, const std::vector<std::size_t>& idx) {
    if (idx.empty()) throw ConfigError("normalization needs at least one sequence");
    const int in = data.input_dim(), out = data.output_dim();
    VectorXd sx = VectorXd::Zero(in), sxx = VectorXd::Zero(in);
    VectorXd sy = VectorXd::Zero(out), syy = VectorXd::Zero(out);
    double n = 0.0;
    for (std::size_t k : idx) {
        const auto& s = data.sequences.at(k);
        sx += s.features.colwise().sum().transpose();
        sxx += s.features.cwiseAbs2().colwise().sum().transpose();
        sy += s.targets.colwise().sum().transpose();
        syy += s.targets.cwiseAbs2().colwise().sum().transpose();
        n += static_cast<double>(s.features.rows());
    }
    auto finish = [n](const VectorXd& s, const VectorXd& ss, VectorXd& mean, VectorXd& sd) {
        mean = s / n;
        sd = (ss / n - mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
        for (Eigen::Index k = 0; k < sd.size(); ++k) {
            if (!(sd[k] > 1e-12 * std::max(1.0, std::abs(mean[k])))) sd[k] = 1.0;
        }
    };
    Normalization norm;
    finish(sx, sxx, norm.in_mean, norm.in_std);
    finish(sy, syy, norm.out_mean, norm.out_std);
    return norm;
}

std::vector<std::vector<std::size_t>> fold_partition(std::size_t n, int folds, std::uint64_t seed) {
    if (folds < 2) throw ConfigError("folds must be >= 2");
    if (static_cast<std::size_t>(folds) > n) {
        throw ConfigError(fmt::format("{} folds requested for {} sequences", folds, n));
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(util::derive_seed(seed, 0x666f6c64));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(folds));
    for (std::size_t k = 0; k < n; ++k) out[k % out.size()].push_back(order[k]);
    for (auto& f : out) std::sort(f.begin(), f.end());
    return out;
}

double evaluate(const Model& model, const SequenceDataset& data, const std::vector<std::size_t>& idx,
                const VectorXd& lambda) {
    return evaluate_normalized(model, normalize(data, model.norm()), idx, lambda);
}

std::vector<double> fit(Model& model, const SequenceDataset& data,
                        const std::vector<std::size_t>& train_idx, const TrainingHyper& hyper,
                        std::uint64_t seed, const EpochCallback& on_epoch) {
    hyper.validate();
    data.validate();
    if (train_idx.empty()) throw ConfigError("no training sequences");
    if (hyper.lambda.size() != data.output_dim()) {
        throw ConfigError(fmt::format("lambda has {} entries for {} outputs", hyper.lambda.size(), data.output_dim()));
    }
    return fit_normalized(model, normalize(data, model.norm()), train_idx, hyper, seed, on_epoch);
}

TrainResult train(const SequenceDataset& data, const TrainingHyper& hyper) {
    hyper.validate();
    data.validate();
    if (hyper.lambda.size() != data.output_dim()) {
        throw ConfigError(fmt::format("lambda has {} entries for {} outputs", hyper.lambda.size(), data.output_dim()));
    }
    const auto folds = fold_partition(data.sequences.size(), hyper.folds, hyper.seed);
    const std::string hash = util::config_hash(
        {{"hyper", hyper.to_json()}, {"dataset", util::config_hash(data.header)}});

    TrainResult result{Model(dims_for(data, hyper)), {}};
    result.report.hyper = hyper;
    result.report.config_hash = hash;
    result.report.best_val_loss = std::numeric_limits<double>::infinity();

    for (int f = 0; f < hyper.folds; ++f) {
        const auto& val = folds[static_cast<std::size_t>(f)];
        std::vector<std::size_t> tr;
        for (int g = 0; g < hyper.folds; ++g) {
            if (g != f) tr.insert(tr.end(), folds[g].begin(), folds[g].end());
        }
        std::sort(tr.begin(), tr.end());

        Model model(dims_for(data, hyper));
        model.init(util::derive_seed(hyper.seed, 1, static_cast<std::uint64_t>(f)));
        model.norm() = compute_normalization(data, tr);
        model.config_hash = hash;
        const Normalized nd = normalize(data, model.norm());

        double fold_best = std::numeric_limits<double>::infinity();
        Params snapshot = model.params();
        fit_normalized(model, nd, tr, hyper, util::derive_seed(hyper.seed, 2, static_cast<std::uint64_t>(f)),
                       [&](int epoch, double train_loss) {
                           const double v = evaluate_normalized(model, nd, val, hyper.lambda);
                           result.report.rows.push_back({f, epoch, train_loss, v});
                           if (v < fold_best) {
                               fold_best = v;
                               snapshot = model.params();
                           }
                       });
        if (fold_best < result.report.best_val_loss) {
            result.report.best_val_loss = fold_best;
            result.report.best_fold = f;
            model.params() = snapshot;
            result.model = std::move(model);
        }
    }
    return result;
}

}  // namespace orbcorr::nn
