// carvq: compress, reconstruct, evaluate and account for embedding matrices.
//
// Exit codes: 0 ok, 2 usage, 3 data error, 4 internal error. Failures print a
// single JSON object {"error": kind, "message": text} on stderr.

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "carvq/accounting.hpp"
#include "carvq/artifact.hpp"
#include "carvq/error.hpp"
#include "carvq/pipeline.hpp"
#include "carvq/tensor_io.hpp"

namespace {

using nlohmann::json;

enum Exit { kOk = 0, kUsage = 2, kData = 3, kInternal = 4 };

struct QuantFlags {
  int levels = 3;
  int kappa = 4;
  std::size_t h = 8;
  std::size_t g = 1024;
  double tol = 1e-4;
  std::size_t max_iter = 100;
  int bits = 4;
  std::string granularity = "per-row";
  bool adaptor = false;
  std::size_t m = 16;
  std::vector<std::size_t> hidden = {384, 512};
  std::size_t iters = 500;
  double lr = 1e-3;
  std::size_t batch = 0;
  std::uint64_t seed = 0;
  int precision = 0;  // 0: follow the input dtype

  void add_rvq(CLI::App* app) {
    app->add_option("-L,--levels", levels, "RVQ iterations L")->capture_default_str();
    app->add_option("--kappa", kappa, "bits per index (K = 2^kappa)")->capture_default_str();
    app->add_option("-h,--subvector-dim", h, "sub-vector dimension h")->capture_default_str();
    app->add_option("-g,--group-size", g, "sub-vectors per group g")->capture_default_str();
    app->add_option("--kmeans-tol", tol, "k-means centroid-move tolerance")->capture_default_str();
    app->add_option("--kmeans-max-iter", max_iter, "k-means iteration cap")->capture_default_str();
  }
  void add_scalar(CLI::App* app) {
    app->add_option("--bits", bits, "scalar quantization bits N")->capture_default_str();
    app->add_option("--granularity", granularity, "per-row | per-matrix")->capture_default_str();
  }
  void add_adaptor(CLI::App* app, bool with_switch) {
    if (with_switch) app->add_flag("--adaptor", adaptor, "train a corrective adaptor on the base residual");
    app->add_option("--m", m, "corrective width m")->capture_default_str();
    app->add_option("--hidden", hidden, "hidden layer widths")->delimiter(',')->capture_default_str();
    app->add_option("--iters", iters, "training passes over the vocabulary")->capture_default_str();
    app->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
    app->add_option("--batch", batch, "tokens per batch (0 = all)")->capture_default_str();
  }
  void add_common(CLI::App* app) {
    app->add_option("--seed", seed, "random seed")->capture_default_str();
    app->add_option("--precision", precision, "storage precision p (16|32); default follows the input dtype")
        ->check(CLI::IsMember({0, 16, 32}));
  }

  carvq::GrvqParams grvq() const {
    carvq::GrvqParams p;
    p.levels = levels;
    p.kappa = kappa;
    p.subvector_dim = h;
    p.group_size = g;
    p.seed = seed;
    p.kmeans_tol = tol;
    p.kmeans_max_iter = max_iter;
    return p;
  }
  carvq::AdaptorConfig adaptor_config(std::size_t vocab, std::size_t n) const {
    carvq::AdaptorConfig c;
    c.vocab = vocab;
    c.out_dim = n;
    c.width = m;
    c.hidden = hidden;
    c.seed = seed;
    c.lr = lr;
    c.iterations = iters;
    c.batch_size = batch;
    return c;
  }
  std::optional<carvq::Precision> storage() const {
    if (precision == 0) return std::nullopt;
    return static_cast<carvq::Precision>(precision);
  }
  carvq::CompressOptions options(unsigned threads) const {
    carvq::CompressOptions o;
    o.grvq = grvq();
    o.sq = {bits, carvq::granularity_from_string(granularity)};
    o.precision = storage();
    o.seed = seed;
    o.threads = threads;
    if (adaptor) o.adaptor = adaptor_config(0, 0);
    return o;
  }
};

void emit(const json& j, const std::string& table, const std::string& format) {
  if (format == "json") {
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << table;
  }
}

std::string metrics_table(const carvq::QualityMetrics& q, const carvq::AccountingReport& r) {
  std::ostringstream os;
  os << std::left << std::setw(28) << "scheme" << r.scheme << '\n';
  os << std::setw(28) << "B_total (bits/param)" << r.b_total.to_fixed(3) << '\n';
  os << std::setw(28) << "B_actual (bits/param)" << r.b_actual.to_fixed(3) << '\n';
  os << std::setw(28) << "mse" << json(q.mse).dump() << '\n';
  os << std::setw(28) << "mean_l1" << json(q.mean_l1).dump() << '\n';
  os << std::setw(28) << "max_abs" << json(q.max_abs).dump() << '\n';
  for (const auto& w : q.worst_rows) {
    os << std::setw(28) << ("worst token " + std::to_string(w.token)) << json(w.mean_l1).dump() << '\n';
  }
  return os.str();
}

int fail(std::string_view kind, const std::string& message, int code) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CARVQ embedding compression toolkit"};
  app.set_help_flag("--help", "Print this help message and exit");
  app.set_config("--config", "", "key=value config file, options under [subcommand] sections; flags win", false);
  app.require_subcommand(1);

  unsigned threads = 1;
  if (const char* env = std::getenv("CARVQ_THREADS")) {
    try {
      threads = static_cast<unsigned>(std::stoul(env));
    } catch (...) {
      return fail("usage", "CARVQ_THREADS must be a positive integer", kUsage);
    }
  }
  std::string format = "table";
  app.add_option("--threads", threads, "worker threads for group encoding (env CARVQ_THREADS)");
  app.add_option("--format", format, "report format")->check(CLI::IsMember({"json", "table"}));

  QuantFlags q;

  // compress
  auto* compress = app.add_subcommand("compress", "compress a .emb matrix into a .carvq artifact");
  std::string in_path;
  std::string out_path;
  std::string scheme = "carvq";
  std::string progress_path;
  compress->add_option("--in", in_path, "input .emb")->required()->check(CLI::ExistingFile);
  compress->add_option("--out", out_path, "output .carvq")->required();
  compress->add_option("--scheme", scheme, "carvq | scalar | carvq+scalar-base")
      ->check(CLI::IsMember({"carvq", "scalar", "carvq+scalar-base"}))
      ->capture_default_str();
  compress->add_option("--progress", progress_path, "write training progress as JSON lines ('-' for stderr)");
  q.add_rvq(compress);
  q.add_scalar(compress);
  q.add_adaptor(compress, true);
  q.add_common(compress);

  // reconstruct
  auto* reconstruct = app.add_subcommand("reconstruct", "decode a .carvq artifact back to a .emb matrix");
  std::string artifact_path;
  std::string dtype_name;
  reconstruct->add_option("--in", artifact_path, "input .carvq")->required()->check(CLI::ExistingFile);
  reconstruct->add_option("--out", out_path, "output .emb")->required();
  reconstruct->add_option("--dtype", dtype_name, "f16 | f32 (default: artifact precision)")
      ->check(CLI::IsMember({"f16", "f32"}));

  // eval
  auto* eval = app.add_subcommand("eval", "measure reconstruction quality of an artifact");
  std::string matrix_path;
  std::size_t worst = 5;
  eval->add_option("--artifact", artifact_path, "input .carvq")->required()->check(CLI::ExistingFile);
  eval->add_option("--matrix", matrix_path, "original .emb")->required()->check(CLI::ExistingFile);
  eval->add_option("--worst", worst, "how many worst tokens to list")->capture_default_str();

  // compare
  auto* compare = app.add_subcommand("compare", "compare several schemes on one matrix");
  std::vector<std::string> schemes;
  compare->add_option("--in", in_path, "input .emb")->required()->check(CLI::ExistingFile);
  compare->add_option("--schemes", schemes, "e.g. int2,int4,rvq-3,carvq-3,ca+int2")->delimiter(',')->required();
  q.add_rvq(compare);
  compare->add_option("--granularity", q.granularity, "scalar granularity")->capture_default_str();
  q.add_adaptor(compare, false);
  q.add_common(compare);

  // report
  auto* report = app.add_subcommand("report", "bitwidth / memory / FLOPs accounting for a shape");
  std::size_t vocab = 0;
  std::size_t dim = 0;
  int p = 16;
  double other_params = 0, emb_bits = 16, other_bits = 16;
  report->add_option("--V", vocab, "vocabulary size")->required();
  report->add_option("--n", dim, "embedding dimension")->required();
  report->add_option("-p", p, "source precision bits")->check(CLI::IsMember({16, 32}))->capture_default_str();
  report->add_option("--scheme", scheme, "carvq | scalar | carvq+scalar-base")
      ->check(CLI::IsMember({"carvq", "scalar", "carvq+scalar-base"}))
      ->capture_default_str();
  report->add_option("--other-params", other_params, "non-embedding parameter count (embedding ratio)");
  report->add_option("--other-bits", other_bits, "bits per non-embedding parameter")->capture_default_str();
  report->add_option("--emb-bits", emb_bits, "bits per embedding parameter for the ratio")->capture_default_str();
  q.add_rvq(report);
  q.add_scalar(report);
  q.add_adaptor(report, true);

  // synth
  auto* synth = app.add_subcommand("synth", "write a clustered synthetic matrix");
  std::size_t clusters = 16;
  double noise = 0.05;
  std::string synth_dtype = "f32";
  synth->add_option("--V", vocab, "rows")->required();
  synth->add_option("--n", dim, "columns")->required();
  synth->add_option("--clusters", clusters, "Gaussian centers")->capture_default_str();
  synth->add_option("--noise", noise, "noise sigma")->capture_default_str();
  synth->add_option("--seed", q.seed, "random seed")->capture_default_str();
  synth->add_option("--dtype", synth_dtype, "f16 | f32")->check(CLI::IsMember({"f16", "f32"}))->capture_default_str();
  synth->add_option("--out", out_path, "output .emb")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), kUsage);
  }
  if (threads == 0) threads = 1;

  try {
    if (*compress) {
      carvq::CompressOptions opt = q.options(threads);
      if (scheme == "carvq") {
        opt.base = carvq::SchemeKind::Rvq;
      } else {
        opt.base = carvq::SchemeKind::Scalar;
        if (scheme == "carvq+scalar-base" && !opt.adaptor) opt.adaptor = q.adaptor_config(0, 0);
        if (scheme == "scalar") opt.adaptor.reset();
      }
      const carvq::EmbeddingMatrix matrix = carvq::load_matrix(in_path);
      if (opt.base == carvq::SchemeKind::Rvq) {
        carvq::validate(opt.grvq, matrix.rows(), matrix.cols());
      }

      std::unique_ptr<std::ofstream> progress_file;
      std::ostream* progress_out = nullptr;
      if (progress_path == "-") {
        progress_out = &std::cerr;
      } else if (!progress_path.empty()) {
        progress_file = std::make_unique<std::ofstream>(progress_path);
        if (!*progress_file) throw carvq::Error(carvq::ErrorKind::IoFailure, "cannot open " + progress_path);
        progress_out = progress_file.get();
      }
      if (progress_out) {
        opt.progress = [progress_out](const carvq::TrainProgress& t) {
          *progress_out << json{{"iter", t.iter}, {"loss", t.loss}, {"seconds", t.seconds}}.dump() << '\n';
        };
      }

      const carvq::CompressOutcome outcome = carvq::compress(matrix, opt);
      carvq::write_container(outcome.artifact, out_path);
      const auto acc = carvq::memory_report(matrix.rows(), matrix.cols(), outcome.artifact.scheme(),
                                            carvq::bits(outcome.artifact.precision));
      json j = carvq::to_json(acc);
      std::string table = carvq::to_table(acc);
      if (outcome.training) {
        j["training"] = {{"initial_loss", outcome.training->initial_loss},
                         {"final_loss", outcome.training->final_loss},
                         {"iterations", outcome.training->loss_curve.size()}};
        std::ostringstream os;
        os << std::left << std::setw(28) << "adaptor initial L1" << outcome.training->initial_loss << '\n'
           << std::setw(28) << "adaptor final L1" << outcome.training->final_loss << '\n';
        table += os.str();
      }
      emit(j, table, format);
    } else if (*reconstruct) {
      const carvq::CompressedArtifact a = carvq::read_container(artifact_path);
      const carvq::DType dtype = dtype_name.empty() ? carvq::dtype_of(a.precision) : carvq::dtype_from_string(dtype_name);
      carvq::save_matrix(a.reconstruct(), out_path, dtype);
    } else if (*eval) {
      const carvq::CompressedArtifact a = carvq::read_container(artifact_path);
      const carvq::EmbeddingMatrix matrix = carvq::load_matrix(matrix_path);
      if (matrix.rows() != a.rows || matrix.cols() != a.cols) {
        throw carvq::Error(carvq::ErrorKind::ShapeMismatch, "artifact and matrix shapes differ");
      }
      const auto metrics = carvq::evaluate(matrix, a.reconstruct(), worst);
      const auto acc = carvq::memory_report(a.rows, a.cols, a.scheme(), carvq::bits(a.precision));
      json j = carvq::to_json(metrics);
      j["scheme"] = acc.scheme;
      j["bpp"] = acc.b_total.value();
      j["bpp_rounded"] = acc.b_total.to_fixed(3);
      j["bpp_actual"] = acc.b_actual.value();
      emit(j, metrics_table(metrics, acc), format);
    } else if (*compare) {
      const carvq::EmbeddingMatrix matrix = carvq::load_matrix(in_path);
      carvq::CompressOptions shared = q.options(threads);
      shared.adaptor = q.adaptor_config(0, 0);
      const auto rows = carvq::compare_schemes(matrix, schemes, shared);
      emit(carvq::to_json(rows), carvq::to_table(rows), format);
    } else if (*report) {
      carvq::SchemeSpec s;
      s.base = scheme == "carvq" ? carvq::SchemeKind::Rvq : carvq::SchemeKind::Scalar;
      s.grvq = q.grvq();
      s.sq = {q.bits, carvq::granularity_from_string(q.granularity)};
      if (q.adaptor || scheme == "carvq+scalar-base") s.adaptor = q.adaptor_config(vocab, dim);
      const auto acc = carvq::memory_report(vocab, dim, s, p);
      json j = carvq::to_json(acc);
      std::string table = carvq::to_table(acc);
      if (other_params > 0) {
        const double ratio = carvq::embedding_ratio(static_cast<double>(vocab) * dim, other_params, emb_bits, other_bits);
        j["embedding_ratio_percent"] = ratio;
        std::ostringstream os;
        os << std::left << std::setw(28) << "embedding share (%)" << std::fixed << std::setprecision(2) << ratio
           << '\n';
        table += os.str();
      }
      emit(j, table, format);
    } else if (*synth) {
      const auto m = carvq::gen_synthetic(vocab, dim, clusters, noise, q.seed);
      carvq::save_matrix(m, out_path, carvq::dtype_from_string(synth_dtype));
    }
  } catch (const carvq::Error& e) {
    const int code = e.kind() == carvq::ErrorKind::InvalidSpec ? kUsage : kData;
    return fail(carvq::to_string(e.kind()), e.detail(), code);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), kInternal);
  }
  return kOk;
}
