#include "typoprobe/typoprobe.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "embedding_store.hpp"
#include "error.hpp"
#include "experiment.hpp"
#include "log.hpp"
#include "neutraliser.hpp"
#include "probe.hpp"
#include "synthgen.hpp"

struct tp_matrix {
    typoprobe::EmbeddingMatrix m;
    std::string language;
};

struct tp_probe {
    typoprobe::TrainedProbe p;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
tp_status guarded(F&& f) {
    g_last_error.clear();
    try {
        f();
        return TP_OK;
    } catch (const typoprobe::Error& e) {
        g_last_error = e.what();
        return static_cast<tp_status>(e.code());
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
    } catch (const std::exception& e) {
        g_last_error = e.what();
    } catch (...) {
        g_last_error = "unknown error";
    }
    return TP_ERR_INTERNAL;
}

void require(bool cond, const char* what) {
    if (!cond) typoprobe::fail(typoprobe::ErrorCode::kInvalidArgument, what);
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

tp_matrix* wrap(typoprobe::EmbeddingMatrix m) {
    auto* h = new tp_matrix{std::move(m), {}};
    h->language = h->m.language().str();
    return h;
}

std::vector<std::string> split_commas(const char* text) {
    std::vector<std::string> out;
    std::string cur;
    for (const char* c = text; *c; ++c) {
        if (*c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += *c;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

extern "C" {

const char* tp_version(void) { return "0.1.0"; }

const char* tp_last_error(void) { return g_last_error.c_str(); }

const char* tp_status_name(tp_status status) {
    if (status == TP_ERR_INTERNAL) return "internal";
    return typoprobe::error_code_name(static_cast<typoprobe::ErrorCode>(status));
}

void tp_string_free(char* s) { std::free(s); }

void tp_set_quiet(int quiet) { typoprobe::set_log_quiet(quiet != 0); }

tp_status tp_matrix_create(const char* language, const char* encoder_name, int layer_index, uint32_t dim,
                           uint64_t count, tp_dtype dtype, const double* data, tp_matrix** out) {
    return guarded([&] {
        require(language && encoder_name && out, "null argument");
        require(data || dim == 0 || count == 0, "null data");
        require(dtype == TP_F32 || dtype == TP_F64, "unknown dtype");
        typoprobe::EmbeddingSetHeader h;
        h.language = typoprobe::LanguageId(language);
        h.encoder_name = encoder_name;
        h.layer_index = layer_index;
        h.dim = dim;
        h.count = count;
        h.dtype = static_cast<typoprobe::DType>(dtype);
        const std::size_t n = static_cast<std::size_t>(dim) * static_cast<std::size_t>(count);
        std::vector<double> values(data, data + n);
        *out = wrap(typoprobe::EmbeddingMatrix(h, std::move(values)));
    });
}

tp_status tp_matrix_read(const char* path, tp_matrix** out) {
    return guarded([&] {
        require(path && out, "null argument");
        *out = wrap(typoprobe::read_embeddings(path));
    });
}

tp_status tp_matrix_write(const tp_matrix* m, const char* path) {
    return guarded([&] {
        require(m && path, "null argument");
        typoprobe::write_embeddings(m->m, path);
    });
}

void tp_matrix_free(tp_matrix* m) { delete m; }

uint64_t tp_matrix_rows(const tp_matrix* m) { return m ? m->m.rows() : 0; }
uint32_t tp_matrix_dim(const tp_matrix* m) { return m ? static_cast<uint32_t>(m->m.dim()) : 0; }
tp_dtype tp_matrix_dtype(const tp_matrix* m) { return m ? static_cast<tp_dtype>(m->m.header().dtype) : TP_F32; }
int tp_matrix_layer(const tp_matrix* m) { return m ? m->m.header().layer_index : -1; }
const double* tp_matrix_data(const tp_matrix* m) { return m ? m->m.values().data() : nullptr; }
const char* tp_matrix_language(const tp_matrix* m) { return m ? m->language.c_str() : nullptr; }
const char* tp_matrix_encoder(const tp_matrix* m) { return m ? m->m.header().encoder_name.c_str() : nullptr; }
const char* tp_matrix_provenance(const tp_matrix* m) { return m ? m->m.header().provenance.c_str() : nullptr; }

tp_status tp_centroid(const tp_matrix* m, tp_matrix** out) {
    return guarded([&] {
        require(m && out, "null argument");
        *out = wrap(typoprobe::centroid_to_matrix(typoprobe::compute_centroid(m->m)));
    });
}

tp_status tp_self_neutralise(const tp_matrix* m, tp_matrix** out) {
    return guarded([&] {
        require(m && out, "null argument");
        *out = wrap(typoprobe::self_neutralise(m->m));
    });
}

tp_status tp_cross_neutralise(const tp_matrix* m, const tp_matrix* neutraliser, tp_matrix** out) {
    return guarded([&] {
        require(m && neutraliser && out, "null argument");
        *out = wrap(typoprobe::cross_neutralise(m->m, typoprobe::compute_centroid(neutraliser->m)));
    });
}

tp_status tp_probe_load(const char* json_path, tp_probe** out) {
    return guarded([&] {
        require(json_path && out, "null argument");
        *out = new tp_probe{typoprobe::load_probe(json_path)};
    });
}

void tp_probe_free(tp_probe* p) { delete p; }

size_t tp_probe_dim(const tp_probe* p) { return p ? p->p.params.dim : 0; }
size_t tp_probe_classes(const tp_probe* p) { return p ? p->p.params.classes : 0; }

const char* tp_probe_label(const tp_probe* p, size_t index) {
    if (!p || index >= p->p.label_map.size()) return nullptr;
    return p->p.label_map[index].c_str();
}

tp_status tp_probe_forward(const tp_probe* p, const double* x, size_t dim, double* probs) {
    return guarded([&] {
        require(p && x && probs, "null argument");
        if (dim != p->p.params.dim) typoprobe::fail(typoprobe::ErrorCode::kDimensionMismatch, "input dimension differs from probe");
        const auto out = typoprobe::forward(p->p.params, {x, dim});
        std::copy(out.begin(), out.end(), probs);
    });
}

tp_status tp_probe_predict(const tp_probe* p, const tp_matrix* m, int32_t* predictions) {
    return guarded([&] {
        require(p && m && predictions, "null argument");
        const auto pred = typoprobe::predict(p->p, m->m);
        std::copy(pred.begin(), pred.end(), predictions);
    });
}

tp_status tp_probe_accuracy(const tp_probe* p, const tp_matrix* m, int32_t gold, double* accuracy) {
    return guarded([&] {
        require(p && m && accuracy, "null argument");
        *accuracy = typoprobe::evaluate_accuracy(p->p, m->m, gold);
    });
}

tp_status tp_synth(const char* spec_path, const char* out_dir, const uint64_t* seed) {
    return guarded([&] {
        require(spec_path && out_dir, "null argument");
        auto spec = typoprobe::load_synthetic_spec(spec_path);
        if (seed) spec.seed = *seed;
        const auto corpus = typoprobe::generate_corpus(spec);
        typoprobe::write_synthetic_corpus(spec, corpus, out_dir);
        typoprobe::log_event("info", "synth_written",
                             {{"out_dir", out_dir}, {"languages", corpus.matrices.size()}, {"seed", spec.seed}});
    });
}

void tp_run_options_init(tp_run_options* options) {
    if (!options) return;
    *options = tp_run_options{};
}

tp_status tp_run(const char* plan_path, const tp_run_options* options, char** run_dir) {
    return guarded([&] {
        require(plan_path != nullptr, "null argument");
        typoprobe::RunOptions ro;
        if (options) {
            if (options->has_seed) ro.seed = options->seed;
            if (options->has_layer) ro.layer = options->layer;
            if (options->has_threshold) ro.threshold = options->threshold;
            if (options->modes) ro.modes = typoprobe::parse_modes(options->modes);
            if (options->formats) ro.formats = split_commas(options->formats);
            if (options->out_root) ro.out_root = options->out_root;
            ro.threads = options->threads;
        }
        const auto dir = typoprobe::run_plan(plan_path, ro);
        if (run_dir) *run_dir = dup_string(dir.string());
    });
}

tp_status tp_validate_manifest(const char* manifest_path, int* consistent, char** report_json) {
    return guarded([&] {
        require(manifest_path && consistent, "null argument");
        const std::filesystem::path path(manifest_path);
        const auto manifest = typoprobe::load_manifest(path);
        const auto report = typoprobe::validate_manifest(manifest, path.parent_path());
        *consistent = report.ok() ? 1 : 0;
        if (report_json) *report_json = dup_string(report.to_json());
    });
}

}  // extern "C"
