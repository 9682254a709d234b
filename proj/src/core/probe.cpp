#include "probe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <json.hpp>

#include "error.hpp"
#include "io_util.hpp"
#include "rng.hpp"

namespace typoprobe {

using nlohmann::json;

ProbeParams ProbeParams::zeros(std::size_t dim, std::size_t classes, std::size_t hidden) {
    ProbeParams p;
    p.dim = dim;
    p.hidden = hidden;
    p.classes = classes;
    p.w1.assign(hidden * dim, 0.0);
    p.b1.assign(hidden, 0.0);
    p.w2.assign(classes * hidden, 0.0);
    p.b2.assign(classes, 0.0);
    return p;
}

std::vector<std::vector<double>*> ProbeParams::blocks() { return {&w1, &b1, &w2, &b2}; }

std::vector<const std::vector<double>*> ProbeParams::blocks() const { return {&w1, &b1, &w2, &b2}; }

ProbeParams init_probe(std::size_t dim, std::size_t num_classes, std::uint64_t seed, std::size_t hidden) {
    if (dim < 1) fail(ErrorCode::kInvalidArgument, "probe input dim must be at least 1");
    if (num_classes < 2) fail(ErrorCode::kInvalidArgument, "probe needs at least 2 classes");
    if (hidden < 1) fail(ErrorCode::kInvalidArgument, "probe needs at least 1 hidden unit");
    auto p = ProbeParams::zeros(dim, num_classes, hidden);
    Rng rng(seed, "init");
    const double limit1 = std::sqrt(6.0 / static_cast<double>(dim + hidden));
    for (double& w : p.w1) w = rng.uniform(-limit1, limit1);
    const double limit2 = std::sqrt(6.0 / static_cast<double>(hidden + num_classes));
    for (double& w : p.w2) w = rng.uniform(-limit2, limit2);
    return p;
}

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> p(logits.begin(), logits.end());
    if (p.empty()) return p;
    const double mx = *std::max_element(p.begin(), p.end());
    double sum = 0.0;
    for (double& v : p) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : p) v /= sum;
    return p;
}

namespace {

// Scratch buffers for one forward/backward pass.
struct Activations {
    std::vector<double> pre;     // W1 x + b1
    std::vector<double> hidden;  // relu(pre)
    std::vector<double> logits;
    std::vector<double> probs;

    explicit Activations(const ProbeParams& p)
        : pre(p.hidden), hidden(p.hidden), logits(p.classes), probs(p.classes) {}
};

void check_input(const ProbeParams& p, std::span<const double> x) {
    if (x.size() != p.dim) {
        fail(ErrorCode::kDimensionMismatch, "probe expects dim " + std::to_string(p.dim) + ", got " +
                                                std::to_string(x.size()));
    }
}

void run_forward(const ProbeParams& p, std::span<const double> x, Activations& a) {
    for (std::size_t h = 0; h < p.hidden; ++h) {
        const double* w = p.w1.data() + h * p.dim;
        double s = p.b1[h];
        for (std::size_t j = 0; j < p.dim; ++j) s += w[j] * x[j];
        a.pre[h] = s;
        a.hidden[h] = s > 0.0 ? s : 0.0;
    }
    for (std::size_t k = 0; k < p.classes; ++k) {
        const double* w = p.w2.data() + k * p.hidden;
        double s = p.b2[k];
        for (std::size_t h = 0; h < p.hidden; ++h) s += w[h] * a.hidden[h];
        a.logits[k] = s;
    }
    const double mx = *std::max_element(a.logits.begin(), a.logits.end());
    double sum = 0.0;
    for (std::size_t k = 0; k < p.classes; ++k) {
        a.probs[k] = std::exp(a.logits[k] - mx);
        sum += a.probs[k];
    }
    for (double& v : a.probs) v /= sum;
}

// -log softmax(logits)[label], computed from the logits to stay finite.
double cross_entropy(const Activations& a, int label) {
    const double mx = *std::max_element(a.logits.begin(), a.logits.end());
    double sum = 0.0;
    for (double l : a.logits) sum += std::exp(l - mx);
    return std::log(sum) + mx - a.logits[static_cast<std::size_t>(label)];
}

int argmax(std::span<const double> v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

std::vector<double> forward(const ProbeParams& params, std::span<const double> x) {
    check_input(params, x);
    Activations a(params);
    run_forward(params, x, a);
    return a.probs;
}

double loss_and_gradient(const ProbeParams& p, std::span<const Example> batch, ProbeParams* grad,
                         std::span<const double> class_weights) {
    if (batch.empty()) fail(ErrorCode::kInvalidArgument, "empty batch");
    if (!class_weights.empty() && class_weights.size() != p.classes) {
        fail(ErrorCode::kInvalidArgument, "class weight count does not match class count");
    }
    if (grad) {
        *grad = ProbeParams::zeros(p.dim, p.classes, p.hidden);
    }
    Activations a(p);
    std::vector<double> dlogits(p.classes);
    std::vector<double> dpre(p.hidden);
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const auto& ex : batch) {
        check_input(p, ex.x);
        if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= p.classes) {
            fail(ErrorCode::kInvalidArgument, "label " + std::to_string(ex.label) + " out of range");
        }
        const double w = class_weights.empty() ? 1.0 : class_weights[static_cast<std::size_t>(ex.label)];
        run_forward(p, ex.x, a);
        loss += w * cross_entropy(a, ex.label) * inv_n;
        if (!grad) continue;

        for (std::size_t k = 0; k < p.classes; ++k) {
            dlogits[k] = (a.probs[k] - (static_cast<int>(k) == ex.label ? 1.0 : 0.0)) * w * inv_n;
            grad->b2[k] += dlogits[k];
            double* gw2 = grad->w2.data() + k * p.hidden;
            for (std::size_t h = 0; h < p.hidden; ++h) gw2[h] += dlogits[k] * a.hidden[h];
        }
        for (std::size_t h = 0; h < p.hidden; ++h) {
            if (a.pre[h] <= 0.0) {
                dpre[h] = 0.0;
                continue;
            }
            double s = 0.0;
            for (std::size_t k = 0; k < p.classes; ++k) s += p.w2[k * p.hidden + h] * dlogits[k];
            dpre[h] = s;
        }
        for (std::size_t h = 0; h < p.hidden; ++h) {
            if (dpre[h] == 0.0) continue;
            grad->b1[h] += dpre[h];
            double* gw1 = grad->w1.data() + h * p.dim;
            for (std::size_t j = 0; j < p.dim; ++j) gw1[j] += dpre[h] * ex.x[j];
        }
    }
    return loss;
}

double gradient_check(const ProbeParams& params, std::span<const Example> batch, const GradientCheckOptions& options,
                      const GradientFn& analytic) {
    if (batch.empty()) fail(ErrorCode::kInvalidArgument, "gradient check needs a non-empty batch");
    ProbeParams grad;
    if (analytic) {
        analytic(params, batch, &grad);
    } else {
        loss_and_gradient(params, batch, &grad);
    }
    ProbeParams probe = params;
    Rng rng(options.seed, "gradient_check");
    double worst = 0.0;
    auto probe_blocks = probe.blocks();
    const auto grad_blocks = std::as_const(grad).blocks();
    for (std::size_t b = 0; b < probe_blocks.size(); ++b) {
        auto& block = *probe_blocks[b];
        std::vector<std::size_t> coords(block.size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (coords.size() > options.coords_per_block) {
            rng.shuffle(coords);
            coords.resize(options.coords_per_block);
        }
        for (std::size_t c : coords) {
            const double saved = block[c];
            block[c] = saved + options.step;
            const double up = loss_and_gradient(probe, batch, nullptr);
            block[c] = saved - options.step;
            const double down = loss_and_gradient(probe, batch, nullptr);
            block[c] = saved;
            const double numeric = (up - down) / (2.0 * options.step);
            const double exact = (*grad_blocks[b])[c];
            const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
            worst = std::max(worst, std::abs(exact - numeric) / denom);
        }
    }
    return worst;
}

const char* optimizer_name(Optimizer o) noexcept { return o == Optimizer::kAdam ? "adam" : "sgd"; }

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        fail(ErrorCode::kInvalidArgument, "learning_rate must be positive");
    }
    if (batch_size < 1) fail(ErrorCode::kInvalidArgument, "batch_size must be positive");
    if (max_epochs < 1) fail(ErrorCode::kInvalidArgument, "max_epochs must be positive");
    if (early_stop_patience < 0) fail(ErrorCode::kInvalidArgument, "early_stop_patience must be non-negative");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
        fail(ErrorCode::kInvalidArgument, "validation_fraction must be in [0, 1)");
    }
}

namespace {

struct Sample {
    std::uint32_t matrix;
    std::uint32_t row;
};

struct Split {
    std::vector<Sample> train;
    std::vector<Sample> validation;
};

Split split_samples(std::span<const LabelledMatrix> data, double fraction, std::uint64_t seed) {
    Split s;
    for (std::size_t m = 0; m < data.size(); ++m) {
        const std::size_t n = data[m].matrix->rows();
        std::vector<std::uint32_t> rows(n);
        std::iota(rows.begin(), rows.end(), 0u);
        Rng rng(seed, "split:" + std::to_string(m));
        rng.shuffle(rows);
        std::size_t n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
        if (n_val >= n) n_val = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
            (i < n_val ? s.validation : s.train).push_back({static_cast<std::uint32_t>(m), rows[i]});
        }
    }
    return s;
}

struct Evaluation {
    double loss = 0;
    double accuracy = 0;
};

Evaluation evaluate_samples(const ProbeParams& p, std::span<const LabelledMatrix> data,
                            const std::vector<Sample>& samples) {
    if (samples.empty()) return {};
    Activations a(p);
    double loss = 0.0;
    std::size_t correct = 0;
    for (const auto& s : samples) {
        const auto& lm = data[s.matrix];
        run_forward(p, lm.matrix->row(s.row), a);
        loss += cross_entropy(a, lm.label);
        if (argmax(a.probs) == lm.label) ++correct;
    }
    const double n = static_cast<double>(samples.size());
    return {loss / n, static_cast<double>(correct) / n};
}

class OptimizerState {
public:
    OptimizerState(const TrainConfig& cfg, const ProbeParams& shape) : cfg_(cfg) {
        if (cfg.optimizer == Optimizer::kAdam) {
            m_ = ProbeParams::zeros(shape.dim, shape.classes, shape.hidden);
            v_ = m_;
        }
    }

    void step(ProbeParams& params, const ProbeParams& grad) {
        ++t_;
        auto pb = params.blocks();
        const auto gb = grad.blocks();
        if (cfg_.optimizer == Optimizer::kSgd) {
            for (std::size_t b = 0; b < pb.size(); ++b) {
                auto& w = *pb[b];
                const auto& g = *gb[b];
                for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg_.learning_rate * g[i];
            }
            return;
        }
        const double b1 = cfg_.adam_beta1;
        const double b2 = cfg_.adam_beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        auto mb = m_.blocks();
        auto vb = v_.blocks();
        for (std::size_t b = 0; b < pb.size(); ++b) {
            auto& w = *pb[b];
            const auto& g = *gb[b];
            auto& m = *mb[b];
            auto& v = *vb[b];
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                const double mhat = m[i] / c1;
                const double vhat = v[i] / c2;
                w[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.adam_epsilon);
            }
        }
    }

private:
    const TrainConfig& cfg_;
    ProbeParams m_;
    ProbeParams v_;
    std::uint64_t t_ = 0;
};

}  // namespace

TrainedProbe train_probe(std::span<const LabelledMatrix> data, std::size_t num_classes, const TrainConfig& config,
                         std::string feature, std::vector<std::string> label_map) {
    config.validate();
    if (data.empty()) fail(ErrorCode::kInvalidArgument, "no training data");
    const std::size_t dim = data.front().matrix->dim();
    std::set<int> labels;
    for (const auto& lm : data) {
        if (!lm.matrix) fail(ErrorCode::kInvalidArgument, "null training matrix");
        if (lm.matrix->dim() != dim) {
            fail(ErrorCode::kDimensionMismatch, "training matrix for " + lm.matrix->language().str() + " has dim " +
                                                    std::to_string(lm.matrix->dim()) + ", expected " +
                                                    std::to_string(dim));
        }
        if (lm.label < 0 || static_cast<std::size_t>(lm.label) >= num_classes) {
            fail(ErrorCode::kInvalidArgument, "label " + std::to_string(lm.label) + " out of range");
        }
        labels.insert(lm.label);
    }
    if (labels.size() < 2) fail(ErrorCode::kValidation, "training data contains a single class");
    if (!label_map.empty() && label_map.size() != num_classes) {
        fail(ErrorCode::kInvalidArgument, "label map size does not match class count");
    }

    TrainedProbe out;
    out.feature = std::move(feature);
    out.label_map = std::move(label_map);
    out.params = init_probe(dim, num_classes, config.seed);

    Split split = split_samples(data, config.validation_fraction, config.seed);

    std::vector<double> class_weights;
    if (config.class_weighting) {
        std::vector<double> counts(num_classes, 0.0);
        for (const auto& s : split.train) counts[static_cast<std::size_t>(data[s.matrix].label)] += 1.0;
        const double present = static_cast<double>(std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0; }));
        class_weights.assign(num_classes, 0.0);
        for (std::size_t k = 0; k < num_classes; ++k) {
            if (counts[k] > 0) class_weights[k] = static_cast<double>(split.train.size()) / (present * counts[k]);
        }
    }

    OptimizerState opt(config, out.params);
    ProbeParams grad;
    std::vector<Example> batch;
    batch.reserve(config.batch_size);
    const bool early_stopping = config.early_stop_patience > 0 && !split.validation.empty();
    double best_val = std::numeric_limits<double>::infinity();
    ProbeParams best_params = out.params;
    int since_best = 0;

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::vector<Sample> order = split.train;
        Rng rng(config.seed, "shuffle:" + std::to_string(epoch));
        rng.shuffle(order);
        std::size_t batch_no = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            batch.clear();
            for (std::size_t i = start; i < end; ++i) {
                const auto& lm = data[order[i].matrix];
                batch.push_back({lm.matrix->row(order[i].row), lm.label});
            }
            const double loss = loss_and_gradient(out.params, batch, &grad, class_weights);
            ++batch_no;
            if (!std::isfinite(loss)) {
                fail(ErrorCode::kNumerical, "non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                                std::to_string(batch_no) + " (optimizer " +
                                                optimizer_name(config.optimizer) + ", learning rate " +
                                                format_double(config.learning_rate) + ")");
            }
            opt.step(out.params, grad);
        }

        EpochLog log;
        log.epoch = epoch;
        const auto tr = evaluate_samples(out.params, data, split.train);
        const auto va = evaluate_samples(out.params, data, split.validation);
        log.train_loss = tr.loss;
        log.train_accuracy = tr.accuracy;
        log.validation_loss = va.loss;
        log.validation_accuracy = va.accuracy;
        out.train_log.push_back(log);
        if (!std::isfinite(tr.loss)) {
            fail(ErrorCode::kNumerical, "non-finite training loss after epoch " + std::to_string(epoch));
        }

        if (early_stopping) {
            if (va.loss < best_val) {
                best_val = va.loss;
                best_params = out.params;
                out.selected_epoch = epoch;
                since_best = 0;
            } else if (++since_best >= config.early_stop_patience) {
                break;
            }
        } else {
            out.selected_epoch = epoch;
        }
    }
    if (early_stopping) out.params = std::move(best_params);
    return out;
}

std::vector<int> predict(const ProbeParams& params, const EmbeddingMatrix& matrix) {
    if (matrix.dim() != params.dim) {
        fail(ErrorCode::kDimensionMismatch, "probe expects dim " + std::to_string(params.dim) + ", matrix of " +
                                                matrix.language().str() + " has dim " + std::to_string(matrix.dim()));
    }
    Activations a(params);
    std::vector<int> out(matrix.rows());
    for (std::size_t i = 0; i < matrix.rows(); ++i) {
        run_forward(params, matrix.row(i), a);
        out[i] = argmax(a.logits);
    }
    return out;
}

std::vector<int> predict(const TrainedProbe& probe, const EmbeddingMatrix& matrix) {
    return predict(probe.params, matrix);
}

double accuracy_of(std::span<const int> predictions, int gold_label) {
    if (predictions.empty()) return 0.0;
    const auto hits = std::count(predictions.begin(), predictions.end(), gold_label);
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double evaluate_accuracy(const TrainedProbe& probe, const EmbeddingMatrix& matrix, int gold_label) {
    const auto pred = predict(probe, matrix);
    return accuracy_of(pred, gold_label);
}

void save_probe(const TrainedProbe& probe, const std::filesystem::path& dir, const std::string& stem,
                int layer_index) {
    const auto& p = probe.params;
    const std::size_t rows[4] = {p.hidden, 1, p.classes, 1};
    const std::size_t cols[4] = {p.dim, p.hidden, p.hidden, p.classes};
    const auto blocks = p.blocks();
    json block_meta = json::array();
    for (std::size_t b = 0; b < 4; ++b) {
        EmbeddingSetHeader h;
        h.language = LanguageId("und");
        h.encoder_name = "probe:" + probe.feature + ":" + kProbeBlockNames[b];
        h.layer_index = layer_index;
        h.dim = cols[b];
        h.count = rows[b];
        h.dtype = DType::kF64;
        const std::string file = stem + "." + kProbeBlockNames[b] + ".emb";
        const auto bytes = encode_embeddings(EmbeddingMatrix(h, *blocks[b]));
        write_file(dir / file, bytes);
        block_meta.push_back({{"name", kProbeBlockNames[b]}, {"path", file}, {"sha256", sha256_hex(bytes)},
                              {"rows", rows[b]}, {"cols", cols[b]}});
    }
    json log = json::array();
    for (const auto& e : probe.train_log) {
        log.push_back({{"epoch", e.epoch},
                       {"train_loss", e.train_loss},
                       {"train_accuracy", e.train_accuracy},
                       {"validation_loss", e.validation_loss},
                       {"validation_accuracy", e.validation_accuracy}});
    }
    json meta = {{"feature", probe.feature}, {"dim", p.dim},           {"hidden", p.hidden},
                 {"classes", p.classes},     {"labels", probe.label_map}, {"selected_epoch", probe.selected_epoch},
                 {"blocks", block_meta},     {"train_log", log}};
    write_file(dir / (stem + ".json"), meta.dump(2) + "\n");
}

TrainedProbe load_probe(const std::filesystem::path& json_path) {
    json meta;
    try {
        meta = json::parse(read_text_file(json_path));
    } catch (const json::parse_error& e) {
        fail(ErrorCode::kParse, json_path.string() + ": " + e.what());
    }
    TrainedProbe out;
    try {
        out.feature = meta.at("feature").get<std::string>();
        out.label_map = meta.at("labels").get<std::vector<std::string>>();
        out.selected_epoch = meta.value("selected_epoch", 0);
        out.params = ProbeParams::zeros(meta.at("dim").get<std::size_t>(), meta.at("classes").get<std::size_t>(),
                                        meta.at("hidden").get<std::size_t>());
        auto blocks = out.params.blocks();
        const auto& block_meta = meta.at("blocks");
        if (block_meta.size() != 4) fail(ErrorCode::kFormat, json_path.string() + ": expected 4 parameter blocks");
        for (std::size_t b = 0; b < 4; ++b) {
            const auto path = json_path.parent_path() / block_meta[b].at("path").get<std::string>();
            const auto m = read_embeddings(path);
            if (m.values().size() != blocks[b]->size()) {
                fail(ErrorCode::kDimensionMismatch, path.string() + ": parameter block has the wrong shape");
            }
            *blocks[b] = m.values();
        }
        for (const auto& e : meta.value("train_log", json::array())) {
            out.train_log.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(),
                                     e.at("train_accuracy").get<double>(), e.at("validation_loss").get<double>(),
                                     e.at("validation_accuracy").get<double>()});
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::kParse, json_path.string() + ": " + e.what());
    }
    return out;
}

}  // namespace typoprobe
