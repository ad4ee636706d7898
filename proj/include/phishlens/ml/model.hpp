#pragma once

#include <openssl/evp.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "phishlens/ml/common.hpp"
#include "phishlens/ml/forest.hpp"
#include "phishlens/ml/logistic.hpp"
#include "phishlens/ml/metrics.hpp"
#include "phishlens/ml/naive_bayes.hpp"

namespace phishlens::ml {

using ModelParams = std::variant<NaiveBayesModel, LogisticModel, ForestModel>;

/// Immutable after construction; safe for concurrent prediction.
struct TrainedModel {
  ModelKind kind = ModelKind::random_forest;
  std::string schema_version{kFeatureSchemaVersion};
  TrainConfig config;
  std::size_t training_rows = 0;
  // Cross-validation metrics recorded at training time, if any.
  std::map<std::string, double> metrics;
  ModelParams params;

  double score(const FeatureVector& x) const {
    return std::visit([&](const auto& m) { return m.score(x); }, params);
  }

  bool operator==(const TrainedModel&) const = default;
};

struct Prediction {
  Label label = Label::legitimate;
  double score = 0;
};

inline Label label_for_score(double score) { return score >= 0.5 ? Label::phishing : Label::legitimate; }

inline ForestParams forest_params(const TrainConfig& cfg) {
  ForestParams p;
  p.n_trees = static_cast<std::size_t>(cfg.param("n_trees"));
  p.max_depth = static_cast<std::size_t>(cfg.param("max_depth"));
  p.min_samples_split = static_cast<std::size_t>(cfg.param("min_samples_split"));
  p.features_per_split = static_cast<std::size_t>(cfg.param("features_per_split"));
  p.bootstrap = cfg.param("bootstrap") != 0;
  p.seed = cfg.seed;
  return p;
}

inline TrainedModel train(const TrainingSet& data, const TrainConfig& cfg) {
  validate(cfg);
  require_both_classes(data);
  TrainedModel model;
  model.kind = cfg.kind;
  model.config = TrainConfig{cfg.kind, cfg.seed, cfg.resolved()};
  model.training_rows = data.size();
  switch (cfg.kind) {
    case ModelKind::naive_bayes: model.params = train_naive_bayes(data, cfg.param("smoothing")); break;
    case ModelKind::logistic:
      model.params = train_logistic(data, cfg.param("learning_rate"), cfg.param("l2"),
                                    static_cast<int>(cfg.param("epochs")));
      break;
    case ModelKind::random_forest: model.params = train_forest(data, forest_params(cfg)); break;
  }
  return model;
}

inline TrainedModel train(const std::vector<FeatureRow>& rows, const TrainConfig& cfg) {
  return train(TrainingSet::from_rows(rows), cfg);
}

inline void check_schema(const TrainedModel& model) {
  if (model.schema_version != kFeatureSchemaVersion)
    throw SchemaMismatch("model schema " + model.schema_version + " does not match " +
                         std::string(kFeatureSchemaVersion));
}

inline Prediction predict(const TrainedModel& model, const FeatureVector& x) {
  check_schema(model);
  validate(x);
  const double s = model.score(x);
  return {label_for_score(s), s};
}

inline Prediction predict(const TrainedModel& model, const FeatureRow& row) { return predict(model, row.features); }

inline Metrics evaluate(const TrainedModel& model, const TrainingSet& data) {
  Metrics m;
  for (std::size_t i = 0; i < data.size(); ++i) m.add(data.y[i], predict(model, data.x[i]).label);
  return m.finalized();
}

inline Metrics evaluate(const TrainedModel& model, const std::vector<FeatureRow>& rows) {
  return evaluate(model, TrainingSet::from_rows(rows));
}

inline std::map<std::string, double> metrics_map(const Metrics& m) {
  return {{"accuracy", m.accuracy},
          {"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"macro_f1", m.macro_f1},
          {"weighted_f1", m.weighted_f1}};
}

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

// Model file: line-oriented text.
//
//   phishlens-model 1
//   kind <naive_bayes|logistic|random_forest>
//   schema <feature schema version>
//   seed <n>
//   rows <n>
//   param <name> <value>          (one per hyperparameter)
//   metric <name> <value>         (optional)
//   ...kind-specific blocks...
//   checksum <sha256 of every preceding byte>
//   end
//
// Doubles use the shortest representation that reads back identically.
inline constexpr std::string_view kModelMagic = "phishlens-model 1";

inline std::string serialize_model(const TrainedModel& model) {
  std::ostringstream out;
  out << kModelMagic << '\n';
  out << "kind " << to_string(model.kind) << '\n';
  out << "schema " << model.schema_version << '\n';
  out << "seed " << model.config.seed << '\n';
  out << "rows " << model.training_rows << '\n';
  for (const auto& [k, v] : model.config.hyperparams) out << "param " << k << ' ' << format_double(v) << '\n';
  for (const auto& [k, v] : model.metrics) out << "metric " << k << ' ' << format_double(v) << '\n';

  if (const auto* nb = std::get_if<NaiveBayesModel>(&model.params)) {
    out << "prior " << format_double(nb->log_prior[0]) << ' ' << format_double(nb->log_prior[1]) << '\n';
    for (std::size_t j = 0; j < kFeatureCount; ++j) {
      const std::size_t k = NaiveBayesModel::category_count(static_cast<Feature>(j));
      for (std::size_t c = 0; c < 2; ++c) {
        out << "likelihood " << j << ' ' << c;
        for (std::size_t cat = 0; cat < k; ++cat) out << ' ' << format_double(nb->log_likelihood[j][c][cat]);
        out << '\n';
      }
    }
  } else if (const auto* lr = std::get_if<LogisticModel>(&model.params)) {
    out << "weights";
    for (double w : lr->weights) out << ' ' << format_double(w);
    out << "\nbias " << format_double(lr->bias) << '\n';
  } else {
    const auto& rf = std::get<ForestModel>(model.params);
    out << "trees " << rf.trees.size() << '\n';
    for (const auto& t : rf.trees) {
      out << "tree " << t.nodes.size() << '\n';
      for (const auto& n : t.nodes)
        out << n.feature << ' ' << format_double(n.threshold) << ' ' << n.left << ' ' << n.right << ' ' << n.counts[0]
            << ' ' << n.counts[1] << '\n';
    }
  }
  std::string body = out.str();
  body += "checksum " + sha256_hex(body) + "\nend\n";
  return body;
}

namespace detail {

class ModelReader {
 public:
  explicit ModelReader(std::string_view body) : in_(std::string(body)) {}

  std::vector<std::string> line(std::string_view expect_tag = {}) {
    std::string l;
    if (!std::getline(in_, l)) throw CorruptModel("model file ends early");
    std::vector<std::string> toks;
    std::istringstream ls(l);
    for (std::string t; ls >> t;) toks.push_back(t);
    if (toks.empty()) throw CorruptModel("blank line in model file");
    if (!expect_tag.empty() && toks[0] != expect_tag)
      throw CorruptModel("expected '" + std::string(expect_tag) + "', found '" + toks[0] + "'");
    return toks;
  }

  int peek() { return in_.peek(); }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istringstream in_;
};

inline double to_double(const std::string& s) {
  auto v = parse_double(s);
  if (!v) throw CorruptModel("bad number '" + s + "'");
  return *v;
}

inline long long to_int(const std::string& s) {
  auto v = text::parse_int(s);
  if (!v) throw CorruptModel("bad integer '" + s + "'");
  return *v;
}

inline std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) throw CorruptModel("bad integer '" + s + "'");
  return v;
}

inline void arity(const std::vector<std::string>& toks, std::size_t n) {
  if (toks.size() != n) throw CorruptModel("wrong field count on '" + toks[0] + "' line");
}

}  // namespace detail

/// Parses a serialized model. A file that is not a phishlens model, or a
/// model of another kind than `expected`, raises KindMismatch; damaged or
/// truncated content raises CorruptModel.
inline TrainedModel parse_model(std::string_view bytes, std::optional<ModelKind> expected = std::nullopt) {
  const std::string magic_line = std::string(kModelMagic) + "\n";
  if (bytes.substr(0, magic_line.size()) != magic_line) {
    if (std::string_view(magic_line).substr(0, bytes.size()) == bytes) throw CorruptModel("model file truncated");
    throw KindMismatch("not a phishlens model file");
  }
  constexpr std::string_view kEnd = "\nend\n";
  if (bytes.size() < kEnd.size() || bytes.substr(bytes.size() - kEnd.size()) != kEnd)
    throw CorruptModel("model file truncated (no end marker)");
  const auto cs = bytes.rfind("\nchecksum ", bytes.size() - kEnd.size());
  if (cs == std::string_view::npos) throw CorruptModel("model file has no checksum");
  const std::string_view body = bytes.substr(0, cs + 1);
  const std::string_view stored = bytes.substr(cs + 10, bytes.size() - kEnd.size() - cs - 10);
  if (stored != sha256_hex(body)) throw CorruptModel("model checksum mismatch");

  detail::ModelReader r(body);
  r.line();
  auto kind_toks = r.line("kind");
  detail::arity(kind_toks, 2);
  const auto kind = model_kind_from_string(kind_toks[1]);
  if (!kind || to_string(*kind) != kind_toks[1]) throw KindMismatch("unknown model kind " + kind_toks[1]);
  if (expected && *kind != *expected)
    throw KindMismatch("expected a " + std::string(to_string(*expected)) + " model, file holds " + kind_toks[1]);

  TrainedModel m;
  m.kind = *kind;
  m.config.kind = *kind;
  auto schema = r.line("schema");
  detail::arity(schema, 2);
  m.schema_version = schema[1];
  auto seed = r.line("seed");
  detail::arity(seed, 2);
  m.config.seed = detail::to_u64(seed[1]);
  auto rows = r.line("rows");
  detail::arity(rows, 2);
  m.training_rows = static_cast<std::size_t>(detail::to_int(rows[1]));

  std::vector<std::string> toks = r.line();
  while (toks[0] == "param" || toks[0] == "metric") {
    detail::arity(toks, 3);
    (toks[0] == "param" ? m.config.hyperparams : m.metrics)[toks[1]] = detail::to_double(toks[2]);
    toks = r.line();
  }

  switch (*kind) {
    case ModelKind::naive_bayes: {
      NaiveBayesModel nb;
      if (toks[0] != "prior") throw CorruptModel("expected prior block");
      detail::arity(toks, 3);
      nb.log_prior = {detail::to_double(toks[1]), detail::to_double(toks[2])};
      for (std::size_t j = 0; j < kFeatureCount; ++j) {
        const std::size_t k = NaiveBayesModel::category_count(static_cast<Feature>(j));
        for (std::size_t c = 0; c < 2; ++c) {
          auto l = r.line("likelihood");
          detail::arity(l, 3 + k);
          if (detail::to_int(l[1]) != static_cast<long long>(j) || detail::to_int(l[2]) != static_cast<long long>(c))
            throw CorruptModel("likelihood rows out of order");
          for (std::size_t cat = 0; cat < k; ++cat) nb.log_likelihood[j][c][cat] = detail::to_double(l[3 + cat]);
        }
      }
      m.params = nb;
      break;
    }
    case ModelKind::logistic: {
      LogisticModel lr;
      if (toks[0] != "weights") throw CorruptModel("expected weights block");
      detail::arity(toks, 1 + kFeatureCount);
      for (std::size_t j = 0; j < kFeatureCount; ++j) lr.weights[j] = detail::to_double(toks[1 + j]);
      auto b = r.line("bias");
      detail::arity(b, 2);
      lr.bias = detail::to_double(b[1]);
      m.params = lr;
      break;
    }
    case ModelKind::random_forest: {
      ForestModel rf;
      if (toks[0] != "trees") throw CorruptModel("expected trees block");
      detail::arity(toks, 2);
      const auto n_trees = detail::to_int(toks[1]);
      if (n_trees < 1) throw CorruptModel("forest without trees");
      rf.trees.resize(static_cast<std::size_t>(n_trees));
      for (auto& t : rf.trees) {
        auto h = r.line("tree");
        detail::arity(h, 2);
        const auto n_nodes = detail::to_int(h[1]);
        if (n_nodes < 1) throw CorruptModel("empty tree");
        t.nodes.resize(static_cast<std::size_t>(n_nodes));
        for (auto& node : t.nodes) {
          auto f = r.line();
          detail::arity(f, 6);
          node.feature = static_cast<int>(detail::to_int(f[0]));
          node.threshold = detail::to_double(f[1]);
          node.left = static_cast<std::int32_t>(detail::to_int(f[2]));
          node.right = static_cast<std::int32_t>(detail::to_int(f[3]));
          node.counts = {static_cast<std::uint32_t>(detail::to_int(f[4])),
                         static_cast<std::uint32_t>(detail::to_int(f[5]))};
          if (node.feature >= static_cast<int>(kFeatureCount)) throw CorruptModel("split on unknown feature");
          // Children always follow their parent, which rules out cycles.
          const auto self = &node - t.nodes.data();
          if (!node.is_leaf() && (node.left <= self || node.right <= self || node.left >= n_nodes ||
                                  node.right >= n_nodes))
            throw CorruptModel("bad child index");
        }
      }
      m.params = std::move(rf);
      break;
    }
  }
  if (!r.at_end()) throw CorruptModel("trailing data before checksum");
  try {
    validate(m.config);
  } catch (const InvalidConfig& e) {
    throw CorruptModel(std::string("stored hyperparameters invalid: ") + e.what());
  }
  return m;
}

/// Writes the model and returns its model_id.
inline std::string save_model(const TrainedModel& model, const std::filesystem::path& path) {
  const std::string bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileUnreadable("cannot write " + path.string());
  out << bytes;
  out.close();
  if (!out) throw FileUnreadable("write failed for " + path.string());
  return sha256_hex(bytes);
}

struct LoadedModel {
  TrainedModel model;
  std::string model_id;  // sha256 of the file bytes
};

inline LoadedModel load_model_with_id(const std::filesystem::path& path,
                                      std::optional<ModelKind> expected = std::nullopt) {
  const std::string bytes = text::read_file(path);
  return {parse_model(bytes, expected), sha256_hex(bytes)};
}

inline TrainedModel load_model(const std::filesystem::path& path, std::optional<ModelKind> expected = std::nullopt) {
  return load_model_with_id(path, expected).model;
}

}  // namespace phishlens::ml
