#include "orbcorr/neural/network.hpp"

#include "orbcorr/errors.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <sstream>

namespace orbcorr::nn {

namespace {

MatrixXd sigmoid(const MatrixXd& a) {
    return (1.0 + (-a.array()).exp()).inverse().matrix();
}

MatrixXd tanh_m(const MatrixXd& a) { return a.array().tanh().matrix(); }

void require(bool ok, const std::string& what) {
    if (!ok) throw StructuralError(what);
}

void check_cell_dims(const RecurrentParams& p, int gates, const MatrixXd& x, const MatrixXd& h) {
    const int hd = p.hidden();
    require(p.W.rows() == gates * hd && p.U.rows() == gates * hd && p.b.size() == gates * hd,
            fmt::format("cell expects {} gate blocks of {} rows", gates, hd));
    require(x.rows() == p.W.cols(),
            fmt::format("cell input has {} rows, weights expect {}", x.rows(), p.W.cols()));
    require(h.rows() == hd && h.cols() == x.cols(),
            fmt::format("hidden state is {}x{}, expected {}x{}", h.rows(), h.cols(), hd, x.cols()));
}

nlohmann::json matrix_json(const MatrixXd& m) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    }
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols,
                          const std::string& name) {
    if (j.at("rows").get<Eigen::Index>() != rows || j.at("cols").get<Eigen::Index>() != cols) {
        throw ConfigError(fmt::format("model tensor {} should be {}x{}", name, rows, cols));
    }
    const auto& data = j.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
        throw ConfigError(fmt::format("model tensor {} has {} values", name, data.size()));
    }
    MatrixXd m(rows, cols);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
    }
    return m;
}

nlohmann::json vector_json(const VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

VectorXd vector_from_json(const nlohmann::json& j, Eigen::Index n, const std::string& name) {
    const auto data = j.get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != n) {
        throw ConfigError(fmt::format("model vector {} should have {} values", name, n));
    }
    return Eigen::Map<const VectorXd>(data.data(), n);
}

const char* const kLstmGates[] = {"f", "i", "c", "o"};
const char* const kGruGates[] = {"z", "r", "n"};

}  // namespace

std::string to_string(CellType c) { return c == CellType::Lstm ? "lstm" : "gru"; }

CellType cell_from_string(const std::string& s) {
    if (s == "lstm") return CellType::Lstm;
    if (s == "gru") return CellType::Gru;
    throw ConfigError(fmt::format("unknown cell type '{}'", s));
}

void Dims::validate() const {
    if (input < 1 || hidden < 1 || layers < 1 || output < 1) {
        throw ConfigError(fmt::format("network dims must be positive (input {}, hidden {}, layers {}, output {})",
                                      input, hidden, layers, output));
    }
}

Params Params::zeros(const Dims& d) {
    d.validate();
    Params p;
    const int g = d.gates();
    for (int l = 0; l < d.layers; ++l) {
        const int in = l == 0 ? d.input : d.hidden;
        p.layers.push_back({MatrixXd::Zero(g * d.hidden, in), MatrixXd::Zero(g * d.hidden, d.hidden),
                            VectorXd::Zero(g * d.hidden)});
    }
    p.Wd = MatrixXd::Zero(d.hidden, d.hidden);
    p.bd = VectorXd::Zero(d.hidden);
    p.Wy = MatrixXd::Zero(d.output, d.hidden);
    p.by = VectorXd::Zero(d.output);
    return p;
}

std::vector<std::pair<double*, Eigen::Index>> Params::tensors() {
    std::vector<std::pair<double*, Eigen::Index>> out;
    for (auto& l : layers) {
        out.emplace_back(l.W.data(), l.W.size());
        out.emplace_back(l.U.data(), l.U.size());
        out.emplace_back(l.b.data(), l.b.size());
    }
    out.emplace_back(Wd.data(), Wd.size());
    out.emplace_back(bd.data(), bd.size());
    out.emplace_back(Wy.data(), Wy.size());
    out.emplace_back(by.data(), by.size());
    return out;
}

std::vector<std::pair<const double*, Eigen::Index>> Params::tensors() const {
    std::vector<std::pair<const double*, Eigen::Index>> out;
    for (auto [ptr, n] : const_cast<Params*>(this)->tensors()) out.emplace_back(ptr, n);
    return out;
}

Eigen::Index Params::size() const {
    Eigen::Index n = 0;
    for (auto [ptr, k] : tensors()) n += k;
    return n;
}

double Params::norm() const {
    double sq = 0.0;
    for (auto [ptr, n] : tensors()) sq += Eigen::Map<const VectorXd>(ptr, n).squaredNorm();
    return std::sqrt(sq);
}

void Params::scale(double s) {
    for (auto [ptr, n] : tensors()) Eigen::Map<VectorXd>(ptr, n) *= s;
}

void Params::set_zero() {
    for (auto [ptr, n] : tensors()) Eigen::Map<VectorXd>(ptr, n).setZero();
}

Normalization Normalization::identity(const Dims& d) {
    return {VectorXd::Zero(d.input), VectorXd::Ones(d.input), VectorXd::Zero(d.output),
            VectorXd::Ones(d.output)};
}

void Normalization::validate(const Dims& d) const {
    if (in_mean.size() != d.input || in_std.size() != d.input || out_mean.size() != d.output ||
        out_std.size() != d.output) {
        throw StructuralError("normalization statistics do not match the network dims");
    }
    if ((in_std.array() <= 0.0).any() || (out_std.array() <= 0.0).any()) {
        throw StructuralError("normalization std must be strictly positive");
    }
}

void lstm_cell_forward(const RecurrentParams& p, const MatrixXd& x, const MatrixXd& h_prev,
                       const MatrixXd& c_prev, LstmCache& cache) {
    check_cell_dims(p, 4, x, h_prev);
    require(c_prev.rows() == h_prev.rows() && c_prev.cols() == h_prev.cols(), "cell state shape mismatch");
    const int hd = p.hidden();
    MatrixXd a = p.W * x + p.U * h_prev;
    a.colwise() += p.b;
    cache.f = sigmoid(a.topRows(hd));
    cache.i = sigmoid(a.middleRows(hd, hd));
    cache.g = tanh_m(a.middleRows(2 * hd, hd));
    cache.o = sigmoid(a.bottomRows(hd));
    cache.c = cache.f.cwiseProduct(c_prev) + cache.i.cwiseProduct(cache.g);
    cache.tanh_c = tanh_m(cache.c);
    cache.h = cache.o.cwiseProduct(cache.tanh_c);
}

void gru_cell_forward(const RecurrentParams& p, const MatrixXd& x, const MatrixXd& h_prev,
                      GruCache& cache) {
    check_cell_dims(p, 3, x, h_prev);
    const int hd = p.hidden();
    MatrixXd a = p.W * x;
    a.colwise() += p.b;
    const MatrixXd zr = a.topRows(2 * hd) + p.U.topRows(2 * hd) * h_prev;
    cache.z = sigmoid(zr.topRows(hd));
    cache.r = sigmoid(zr.bottomRows(hd));
    cache.n = tanh_m(a.bottomRows(hd) + p.U.bottomRows(hd) * cache.r.cwiseProduct(h_prev));
    cache.h = h_prev + cache.z.cwiseProduct(cache.n - h_prev);
}

double loss(const std::vector<MatrixXd>& pred, const std::vector<MatrixXd>& target,
            const VectorXd& lambda) {
    if (pred.size() != target.size() || pred.empty()) throw StructuralError("loss: step count mismatch");
    double total = 0.0;
    Eigen::Index samples = 0;
    for (std::size_t t = 0; t < pred.size(); ++t) {
        if (pred[t].rows() != target[t].rows() || pred[t].cols() != target[t].cols() ||
            pred[t].rows() != lambda.size()) {
            throw StructuralError("loss: shape mismatch");
        }
        total += (lambda.asDiagonal() * (pred[t] - target[t]).cwiseAbs2()).sum();
        samples += pred[t].cols();
    }
    return total / static_cast<double>(samples);
}

struct Model::Tape {
    std::vector<std::vector<MatrixXd>> inputs;   // [layer][t], after dropout
    std::vector<std::vector<MatrixXd>> masks;    // [layer][t], scaled keep masks on layer outputs
    std::vector<std::vector<LstmCache>> lstm;
    std::vector<std::vector<GruCache>> gru;
    std::vector<MatrixXd> dense_in, dense_pre, dense_out;
};

Model::Model(const Dims& d) : dims_(d), params_(Params::zeros(d)), norm_(Normalization::identity(d)) {}

void Model::init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto fill = [&](auto block, double fan_in, double fan_out) {
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        const double lim = std::sqrt(6.0 / (fan_in + fan_out));
        for (Eigen::Index r = 0; r < block.rows(); ++r) {
            for (Eigen::Index c = 0; c < block.cols(); ++c) block(r, c) = lim * u(rng);
        }
    };
    const int hd = dims_.hidden;
    for (auto& l : params_.layers) {
        for (int g = 0; g < dims_.gates(); ++g) {
            fill(l.W_gate(g), static_cast<double>(l.W.cols()), hd);
            fill(l.U_gate(g), hd, hd);
        }
        l.b.setZero();
        if (dims_.cell == CellType::Lstm) l.b_gate(0).setConstant(1.0);
    }
    fill(params_.Wd.block(0, 0, hd, hd), hd, hd);
    params_.bd.setZero();
    fill(params_.Wy.block(0, 0, dims_.output, hd), hd, dims_.output);
    params_.by.setZero();
}

std::vector<MatrixXd> Model::run(const std::vector<MatrixXd>& x, double dropout,
                                 std::mt19937_64* rng, Tape* tape) const {
    if (x.empty()) throw StructuralError("forward needs at least one step");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError(fmt::format("dropout {} outside [0, 1)", dropout));
    const Eigen::Index batch = x[0].cols();
    const std::size_t steps = x.size();
    const int hd = dims_.hidden;
    const bool drop = dropout > 0.0 && rng != nullptr;
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    if (tape) {
        tape->inputs.assign(dims_.layers, {});
        tape->masks.assign(dims_.layers, {});
        tape->lstm.assign(dims_.layers, {});
        tape->gru.assign(dims_.layers, {});
        tape->dense_in.clear();
        tape->dense_pre.clear();
        tape->dense_out.clear();
    }

    std::vector<MatrixXd> layer_in = x;
    for (int l = 0; l < dims_.layers; ++l) {
        const auto& p = params_.layers[l];
        std::vector<MatrixXd> out(steps);
        MatrixXd h = MatrixXd::Zero(hd, batch);
        MatrixXd c = MatrixXd::Zero(hd, batch);
        LstmCache lc;
        GruCache gc;
        for (std::size_t t = 0; t < steps; ++t) {
            if (dims_.cell == CellType::Lstm) {
                lstm_cell_forward(p, layer_in[t], h, c, lc);
                h = lc.h;
                c = lc.c;
                if (tape) tape->lstm[l].push_back(lc);
            } else {
                gru_cell_forward(p, layer_in[t], h, gc);
                h = gc.h;
                if (tape) tape->gru[l].push_back(gc);
            }
            out[t] = h;
        }
        if (tape) tape->inputs[l] = std::move(layer_in);
        if (drop) {
            const double keep = 1.0 - dropout;
            for (std::size_t t = 0; t < steps; ++t) {
                MatrixXd mask(hd, batch);
                for (Eigen::Index cidx = 0; cidx < batch; ++cidx) {
                    for (Eigen::Index r = 0; r < hd; ++r) mask(r, cidx) = uni(*rng) < keep ? 1.0 / keep : 0.0;
                }
                out[t] = out[t].cwiseProduct(mask);
                if (tape) tape->masks[l].push_back(std::move(mask));
            }
        }
        layer_in = std::move(out);
    }

    std::vector<MatrixXd> y(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        MatrixXd pre = params_.Wd * layer_in[t];
        pre.colwise() += params_.bd;
        MatrixXd act = pre.cwiseMax(0.0);
        y[t] = params_.Wy * act;
        y[t].colwise() += params_.by;
        if (!y[t].allFinite()) {
            throw NumericalError(fmt::format("network output became non-finite at step {}", t));
        }
        if (tape) {
            tape->dense_in.push_back(std::move(layer_in[t]));
            tape->dense_pre.push_back(std::move(pre));
            tape->dense_out.push_back(std::move(act));
        }
    }
    return y;
}

std::vector<MatrixXd> Model::forward(const std::vector<MatrixXd>& x, double dropout,
                                     std::mt19937_64* rng) const {
    return run(x, dropout, rng, nullptr);
}

MatrixXd Model::predict(const MatrixXd& seq) const {
    if (seq.cols() != dims_.input) {
        throw StructuralError(fmt::format("sequence has {} features, model expects {}", seq.cols(), dims_.input));
    }
    std::vector<MatrixXd> x(static_cast<std::size_t>(seq.rows()));
    for (Eigen::Index t = 0; t < seq.rows(); ++t) {
        x[t] = ((seq.row(t).transpose() - norm_.in_mean).array() / norm_.in_std.array()).matrix();
    }
    const auto y = run(x, 0.0, nullptr, nullptr);
    MatrixXd out(seq.rows(), dims_.output);
    for (Eigen::Index t = 0; t < seq.rows(); ++t) {
        out.row(t) = (y[t].col(0).array() * norm_.out_std.array() + norm_.out_mean.array()).transpose();
    }
    return out;
}

double Model::loss_and_gradient(const std::vector<MatrixXd>& x, const std::vector<MatrixXd>& y,
                                const VectorXd& lambda, Params& grad, double dropout,
                                std::mt19937_64* rng) const {
    Tape tape;
    const auto pred = run(x, dropout, rng, &tape);
    const double value = loss(pred, y, lambda);
    const std::size_t steps = x.size();
    const double norm = 1.0 / static_cast<double>(steps * static_cast<std::size_t>(x[0].cols()));
    const int hd = dims_.hidden;

    // head and dense layer
    std::vector<MatrixXd> d_above(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        const MatrixXd dy = (2.0 * norm) * (lambda.asDiagonal() * (pred[t] - y[t]));
        grad.Wy.noalias() += dy * tape.dense_out[t].transpose();
        grad.by += dy.rowwise().sum();
        MatrixXd dpre = params_.Wy.transpose() * dy;
        dpre = dpre.cwiseProduct((tape.dense_pre[t].array() > 0.0).cast<double>().matrix());
        grad.Wd.noalias() += dpre * tape.dense_in[t].transpose();
        grad.bd += dpre.rowwise().sum();
        d_above[t] = params_.Wd.transpose() * dpre;
    }

    for (int l = dims_.layers - 1; l >= 0; --l) {
        const auto& p = params_.layers[l];
        auto& g = grad.layers[l];
        if (!tape.masks[l].empty()) {
            for (std::size_t t = 0; t < steps; ++t) d_above[t] = d_above[t].cwiseProduct(tape.masks[l][t]);
        }
        const Eigen::Index batch = x[0].cols();
        MatrixXd dh_next = MatrixXd::Zero(hd, batch);
        MatrixXd dc_next = MatrixXd::Zero(hd, batch);
        const MatrixXd zeros = MatrixXd::Zero(hd, batch);
        std::vector<MatrixXd> d_input(steps);
        for (std::size_t s = steps; s-- > 0;) {
            const MatrixXd dh = d_above[s] + dh_next;
            if (dims_.cell == CellType::Lstm) {
                const auto& k = tape.lstm[l][s];
                const MatrixXd& c_prev = s > 0 ? tape.lstm[l][s - 1].c : zeros;
                const MatrixXd& h_prev = s > 0 ? tape.lstm[l][s - 1].h : zeros;
                const MatrixXd d_o = dh.cwiseProduct(k.tanh_c);
                const MatrixXd dc = dh.cwiseProduct(k.o).cwiseProduct(
                                        (1.0 - k.tanh_c.array().square()).matrix()) + dc_next;
                MatrixXd da(4 * hd, batch);
                da.topRows(hd) = dc.cwiseProduct(c_prev).cwiseProduct(
                    k.f.cwiseProduct((1.0 - k.f.array()).matrix()));
                da.middleRows(hd, hd) = dc.cwiseProduct(k.g).cwiseProduct(
                    k.i.cwiseProduct((1.0 - k.i.array()).matrix()));
                da.middleRows(2 * hd, hd) = dc.cwiseProduct(k.i).cwiseProduct(
                    (1.0 - k.g.array().square()).matrix());
                da.bottomRows(hd) = d_o.cwiseProduct(k.o.cwiseProduct((1.0 - k.o.array()).matrix()));
                dc_next = dc.cwiseProduct(k.f);
                g.W.noalias() += da * tape.inputs[l][s].transpose();
                g.U.noalias() += da * h_prev.transpose();
                g.b += da.rowwise().sum();
                dh_next = p.U.transpose() * da;
                if (l > 0) d_input[s] = p.W.transpose() * da;
            } else {
                const auto& k = tape.gru[l][s];
                const MatrixXd& h_prev = s > 0 ? tape.gru[l][s - 1].h : zeros;
                const MatrixXd dz = dh.cwiseProduct(k.n - h_prev);
                const MatrixXd dn = dh.cwiseProduct(k.z);
                MatrixXd da(3 * hd, batch);
                da.bottomRows(hd) = dn.cwiseProduct((1.0 - k.n.array().square()).matrix());
                const MatrixXd rh = k.r.cwiseProduct(h_prev);
                const MatrixXd d_rh = p.U.bottomRows(hd).transpose() * da.bottomRows(hd);
                da.topRows(hd) = dz.cwiseProduct(k.z.cwiseProduct((1.0 - k.z.array()).matrix()));
                da.middleRows(hd, hd) = d_rh.cwiseProduct(h_prev).cwiseProduct(
                    k.r.cwiseProduct((1.0 - k.r.array()).matrix()));
                g.W.noalias() += da * tape.inputs[l][s].transpose();
                g.U.topRows(2 * hd).noalias() += da.topRows(2 * hd) * h_prev.transpose();
                g.U.bottomRows(hd).noalias() += da.bottomRows(hd) * rh.transpose();
                g.b += da.rowwise().sum();
                dh_next = dh.cwiseProduct((1.0 - k.z.array()).matrix()) + d_rh.cwiseProduct(k.r) +
                          p.U.topRows(2 * hd).transpose() * da.topRows(2 * hd);
                if (l > 0) d_input[s] = p.W.transpose() * da;
            }
        }
        d_above = std::move(d_input);
    }
    return value;
}

nlohmann::json Model::to_json() const {
    nlohmann::json layers = nlohmann::json::array();
    const auto& names = dims_.cell == CellType::Lstm ? kLstmGates : kGruGates;
    for (const auto& l : params_.layers) {
        nlohmann::json jl;
        auto& lm = const_cast<RecurrentParams&>(l);
        for (int g = 0; g < dims_.gates(); ++g) {
            jl[fmt::format("W_{}", names[g])] = matrix_json(lm.W_gate(g));
            jl[fmt::format("U_{}", names[g])] = matrix_json(lm.U_gate(g));
            jl[fmt::format("b_{}", names[g])] = vector_json(lm.b_gate(g));
        }
        layers.push_back(std::move(jl));
    }
    return {{"schema", "orbcorr.model/1"},
            {"dims",
             {{"input", dims_.input}, {"hidden", dims_.hidden}, {"layers", dims_.layers},
              {"output", dims_.output}, {"cell", to_string(dims_.cell)}}},
            {"layers", layers},
            {"dense", {{"W_d", matrix_json(params_.Wd)}, {"b_d", vector_json(params_.bd)}}},
            {"head", {{"W_y", matrix_json(params_.Wy)}, {"b_y", vector_json(params_.by)}}},
            {"norm",
             {{"in_mean", vector_json(norm_.in_mean)}, {"in_std", vector_json(norm_.in_std)},
              {"out_mean", vector_json(norm_.out_mean)}, {"out_std", vector_json(norm_.out_std)}}},
            {"config_hash", config_hash}};
}

Model Model::from_json(const nlohmann::json& j) {
    try {
        const auto& jd = j.at("dims");
        Dims d{jd.at("input").get<int>(), jd.at("hidden").get<int>(), jd.at("layers").get<int>(),
               jd.at("output").get<int>(), cell_from_string(jd.at("cell").get<std::string>())};
        Model m(d);
        const auto& names = d.cell == CellType::Lstm ? kLstmGates : kGruGates;
        const auto& jl = j.at("layers");
        if (static_cast<int>(jl.size()) != d.layers) throw ConfigError("model layer count mismatch");
        for (int l = 0; l < d.layers; ++l) {
            auto& p = m.params_.layers[l];
            for (int g = 0; g < d.gates(); ++g) {
                const std::string w = fmt::format("W_{}", names[g]);
                const std::string u = fmt::format("U_{}", names[g]);
                const std::string b = fmt::format("b_{}", names[g]);
                p.W_gate(g) = matrix_from_json(jl[l].at(w), d.hidden, p.W.cols(), w);
                p.U_gate(g) = matrix_from_json(jl[l].at(u), d.hidden, d.hidden, u);
                p.b_gate(g) = vector_from_json(jl[l].at(b), d.hidden, b);
            }
        }
        m.params_.Wd = matrix_from_json(j.at("dense").at("W_d"), d.hidden, d.hidden, "W_d");
        m.params_.bd = vector_from_json(j.at("dense").at("b_d"), d.hidden, "b_d");
        m.params_.Wy = matrix_from_json(j.at("head").at("W_y"), d.output, d.hidden, "W_y");
        m.params_.by = vector_from_json(j.at("head").at("b_y"), d.output, "b_y");
        const auto& jn = j.at("norm");
        m.norm_.in_mean = vector_from_json(jn.at("in_mean"), d.input, "in_mean");
        m.norm_.in_std = vector_from_json(jn.at("in_std"), d.input, "in_std");
        m.norm_.out_mean = vector_from_json(jn.at("out_mean"), d.output, "out_mean");
        m.norm_.out_std = vector_from_json(jn.at("out_std"), d.output, "out_std");
        m.norm_.validate(d);
        m.config_hash = j.value("config_hash", "");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("bad model document: {}", e.what()));
    }
}

void Model::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error(fmt::format("cannot write model file {}", path));
    out << to_json().dump() << '\n';
}

Model Model::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot open model file {}", path));
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(fmt::format("model file {}: {}", path, e.what()));
    }
}

double clip_gradients(Params& grads, double max_norm) {
    if (!(max_norm > 0.0)) throw ConfigError(fmt::format("clip norm must be positive ({})", max_norm));
    const double g = grads.norm();
    if (g > max_norm) grads.scale(max_norm / g);
    return g;
}

AdamState adam_init(const Params& like) {
    AdamState s{like, like, 0};
    s.m.set_zero();
    s.v.set_zero();
    return s;
}

void adam_step(Params& params, const Params& grads, AdamState& state, const AdamConfig& cfg) {
    ++state.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    auto p = params.tensors();
    const auto g = grads.tensors();
    auto m = state.m.tensors();
    auto v = state.v.tensors();
    if (p.size() != g.size() || p.size() != m.size()) throw StructuralError("adam: parameter layout mismatch");
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (p[k].second != g[k].second) throw StructuralError("adam: tensor size mismatch");
        Eigen::Map<VectorXd> pk(p[k].first, p[k].second), mk(m[k].first, m[k].second),
            vk(v[k].first, v[k].second);
        const Eigen::Map<const VectorXd> gk(g[k].first, g[k].second);
        mk = cfg.beta1 * mk + (1.0 - cfg.beta1) * gk;
        vk = cfg.beta2 * vk + (1.0 - cfg.beta2) * gk.cwiseAbs2();
        pk.array() -= cfg.learning_rate * (mk.array() / c1) / ((vk.array() / c2).sqrt() + cfg.epsilon);
    }
}

}  // namespace orbcorr::nn
