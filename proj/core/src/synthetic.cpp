#include "ebmc/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "ebmc/csv.hpp"
#include "ebmc/errors.hpp"
#include "ebmc/seed.hpp"

namespace ebmc::data {

namespace fs = std::filesystem;
using ad::Tensor;

void GeneratorSpec::validate() const {
  if (num_classes < 2) throw ContractError("generator: need at least 2 classes");
  if (modalities.size() < 2) throw ContractError("generator: need at least 2 modalities");
  if (modalities.size() > 16) throw ContractError("generator: at most 16 modalities");
  for (std::size_t m = 0; m < modalities.size(); ++m) {
    const auto& mod = modalities[m];
    if (mod.name.empty()) throw ContractError("generator: modality name must be non-empty");
    for (std::size_t o = 0; o < m; ++o)
      if (modalities[o].name == mod.name) throw ContractError("generator: duplicate modality '" + mod.name + "'");
    if (mod.dim < 2 || mod.dim + 1 < num_classes) {
      throw ContractError("generator: modality '" + mod.name + "' dim " + std::to_string(mod.dim) +
                          " cannot hold " + std::to_string(num_classes) + " equidistant class means");
    }
    if (!(mod.snr >= 0.0)) throw ContractError("generator: snr must be non-negative");
    if (!(mod.noise > 0.0)) throw ContractError("generator: noise scale must be positive");
  }
}

GeneratorSpec GeneratorSpec::default_imbalanced(std::uint64_t seed) {
  GeneratorSpec spec;
  spec.num_classes = 4;
  spec.modalities = {{"text", 16, 2.0, 1.0}, {"visual", 8, 0.6, 1.0}, {"audio", 8, 0.6, 1.0}};
  spec.samples_per_class = 500;
  spec.seed = seed;
  return spec;
}

std::size_t BoolMatrix::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::size_t BoolMatrix::count_row(std::size_t r) const {
  std::size_t c = 0;
  for (std::size_t j = 0; j < cols_; ++j) c += bits_[r * cols_ + j];
  return c;
}

std::size_t MultimodalBatch::index_of(const std::string& name) const {
  for (std::size_t m = 0; m < modalities.size(); ++m)
    if (modalities[m] == name) return m;
  throw ContractError("unknown modality '" + name + "'");
}

Tensor mask_column(const BoolMatrix& mask, std::size_t m) {
  Tensor col(mask.rows(), 1, 0.0);
  auto d = col.mutable_data();
  for (std::size_t i = 0; i < mask.rows(); ++i) d[i] = mask(i, m) ? 1.0 : 0.0;
  return col;
}

Tensor MultimodalBatch::present_column(std::size_t m) const { return mask_column(present, m); }

void MultimodalBatch::validate() const {
  const std::size_t n = size();
  const std::size_t M = modalities.size();
  if (features.size() != M || feature_mask.size() != M) throw ContractError("batch: per-modality arrays disagree");
  if (present.rows() != n || present.cols() != M) throw ContractError("batch: present mask shape mismatch");
  if (!scores.empty() && scores.size() != n) throw ContractError("batch: score count mismatch");
  for (std::size_t m = 0; m < M; ++m) {
    if (features[m].rows() != n) {
      throw DimensionError("batch: modality '" + modalities[m] + "' has " + std::to_string(features[m].rows()) +
                           " rows, expected " + std::to_string(n));
    }
    if (feature_mask[m].rows() != n || feature_mask[m].cols() != features[m].cols()) {
      throw ContractError("batch: feature mask shape mismatch for '" + modalities[m] + "'");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (present(i, m)) continue;
      for (std::size_t j = 0; j < features[m].cols(); ++j) {
        if (features[m](i, j) != 0.0 || feature_mask[m](i, j)) {
          throw ContractError("batch: absent modality row " + std::to_string(i) + " of '" + modalities[m] +
                              "' is not zeroed");
        }
      }
    }
  }
}

// Geometry ---------------------------------------------------------------------

namespace {

using Matrix = std::vector<std::vector<double>>;

// Modified Gram-Schmidt over the rows of `rows`; drops (near-)dependent rows.
Matrix orthonormalize(const Matrix& rows) {
  Matrix basis;
  for (auto v : rows) {
    for (const auto& b : basis) {
      double dot = 0.0;
      for (std::size_t j = 0; j < v.size(); ++j) dot += v[j] * b[j];
      for (std::size_t j = 0; j < v.size(); ++j) v[j] -= dot * b[j];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-10) continue;
    for (double& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  return basis;
}

// K unit vectors in R^{K-1} with pairwise inner product -1/(K-1).
Matrix simplex_corners(std::size_t K) {
  Matrix centered(K, std::vector<double>(K, -1.0 / static_cast<double>(K)));
  for (std::size_t k = 0; k < K; ++k) centered[k][k] += 1.0;
  const Matrix basis = orthonormalize(centered);  // K-1 vectors spanning the sum-zero plane
  Matrix coords(K, std::vector<double>(basis.size(), 0.0));
  for (std::size_t k = 0; k < K; ++k) {
    double norm = 0.0;
    for (std::size_t b = 0; b < basis.size(); ++b) {
      double dot = 0.0;
      for (std::size_t j = 0; j < K; ++j) dot += centered[k][j] * basis[b][j];
      coords[k][b] = dot;
      norm += dot * dot;
    }
    norm = std::sqrt(norm);
    for (double& x : coords[k]) x /= norm;
  }
  return coords;
}

Matrix random_orthogonal(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  while (true) {
    Matrix g(d, std::vector<double>(d));
    for (auto& row : g)
      for (double& x : row) x = normal(rng);
    Matrix q = orthonormalize(g);
    if (q.size() == d) return q;
  }
}

}  // namespace

std::vector<Tensor> class_means(const GeneratorSpec& spec) {
  spec.validate();
  const std::size_t K = spec.num_classes;
  const Matrix corners = simplex_corners(K);
  std::vector<Tensor> means;
  for (const auto& mod : spec.modalities) {
    std::mt19937_64 rng(derive_seed(spec.seed, "geometry/" + mod.name));
    const Matrix rot = random_orthogonal(mod.dim, rng);
    Tensor mu(K, mod.dim, 0.0);
    auto d = mu.mutable_data();
    for (std::size_t k = 0; k < K; ++k) {
      // Embed in the first K-1 coordinates, then rotate.
      for (std::size_t j = 0; j < mod.dim; ++j) {
        double v = 0.0;
        for (std::size_t c = 0; c < corners[k].size(); ++c) v += rot[c][j] * corners[k][c];
        d[k * mod.dim + j] = v;
      }
    }
    means.push_back(std::move(mu));
  }
  return means;
}

MultimodalBatch generate(const GeneratorSpec& spec, std::size_t n, std::uint64_t stream) {
  spec.validate();
  const std::size_t K = spec.num_classes;
  if (n < K) throw ContractError("generate: n=" + std::to_string(n) + " is smaller than K=" + std::to_string(K));
  const auto means = class_means(spec);
  std::mt19937_64 rng(derive_seed(spec.seed, "samples/" + std::to_string(stream)));
  std::normal_distribution<double> normal(0.0, 1.0);

  MultimodalBatch batch;
  batch.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) batch.labels[i] = static_cast<int>(i % K);
  std::shuffle(batch.labels.begin(), batch.labels.end(), rng);

  const std::size_t M = spec.modalities.size();
  batch.present = BoolMatrix(n, M, true);
  for (std::size_t m = 0; m < M; ++m) {
    const auto& mod = spec.modalities[m];
    batch.modalities.push_back(mod.name);
    Tensor x(n, mod.dim, 0.0);
    auto d = x.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
      const auto y = static_cast<std::size_t>(batch.labels[i]);
      for (std::size_t j = 0; j < mod.dim; ++j) {
        d[i * mod.dim + j] = mod.snr * means[m](y, j) + mod.noise * normal(rng);
      }
    }
    batch.features.push_back(std::move(x));
    batch.feature_mask.emplace_back(n, mod.dim, true);
  }
  if (spec.regression) {
    batch.scores.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double base = -3.0 + 6.0 * batch.labels[i] / static_cast<double>(K - 1);
      batch.scores[i] = std::clamp(base + 0.1 * normal(rng), -3.0, 3.0);
    }
  }
  return batch;
}

MultimodalBatch apply_modality_missing(const MultimodalBatch& batch, std::span<const std::string> keep) {
  if (keep.empty()) throw ContractError("apply_modality_missing: subset must be non-empty");
  std::vector<bool> kept(batch.num_modalities(), false);
  for (const auto& name : keep) kept[batch.index_of(name)] = true;
  MultimodalBatch out = batch;
  for (std::size_t m = 0; m < out.num_modalities(); ++m) {
    if (kept[m]) continue;
    std::fill(out.features[m].mutable_data().begin(), out.features[m].mutable_data().end(), 0.0);
    out.feature_mask[m] = BoolMatrix(out.size(), out.features[m].cols(), false);
    for (std::size_t i = 0; i < out.size(); ++i) out.present.set(i, m, false);
  }
  return out;
}

MultimodalBatch apply_feature_dropout(const MultimodalBatch& batch, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p < 1.0)) throw ContractError("apply_feature_dropout: rate must lie in [0, 1)");
  MultimodalBatch out = batch;
  if (p == 0.0) return out;
  std::mt19937_64 rng(derive_seed(seed, "feature-dropout"));
  std::bernoulli_distribution drop(p);
  for (std::size_t m = 0; m < out.num_modalities(); ++m) {
    auto d = out.features[m].mutable_data();
    const std::size_t dim = out.features[m].cols();
    for (std::size_t i = 0; i < out.size(); ++i) {
      for (std::size_t j = 0; j < dim; ++j) {
        const bool dropped = drop(rng);  // drawn for every entry so streams do not depend on masks
        if (!out.present(i, m) || !dropped) continue;
        d[i * dim + j] = 0.0;
        out.feature_mask[m].set(i, j, false);
      }
    }
  }
  return out;
}

MultimodalBatch apply_additive_noise(const MultimodalBatch& batch, const std::string& modality, double scale,
                                     std::uint64_t seed) {
  MultimodalBatch out = batch;
  const std::size_t m = out.index_of(modality);
  std::mt19937_64 rng(derive_seed(seed, "additive-noise/" + modality));
  std::normal_distribution<double> normal(0.0, scale);
  auto d = out.features[m].mutable_data();
  const std::size_t dim = out.features[m].cols();
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      const double e = normal(rng);
      if (out.present(i, m) && out.feature_mask[m](i, j)) d[i * dim + j] += e;
    }
  }
  return out;
}

MultimodalBatch select_rows(const MultimodalBatch& batch, std::span<const std::size_t> rows) {
  MultimodalBatch out;
  out.modalities = batch.modalities;
  const std::size_t n = rows.size();
  out.labels.reserve(n);
  for (std::size_t r : rows) out.labels.push_back(batch.labels.at(r));
  if (batch.regression())
    for (std::size_t r : rows) out.scores.push_back(batch.scores[r]);
  out.present = BoolMatrix(n, batch.num_modalities(), false);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t m = 0; m < batch.num_modalities(); ++m) out.present.set(i, m, batch.present(rows[i], m));
  for (std::size_t m = 0; m < batch.num_modalities(); ++m) {
    const std::size_t dim = batch.features[m].cols();
    Tensor x(n, dim, 0.0);
    BoolMatrix mask(n, dim, false);
    auto d = x.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < dim; ++j) {
        d[i * dim + j] = batch.features[m](rows[i], j);
        mask.set(i, j, batch.feature_mask[m](rows[i], j));
      }
    }
    out.features.push_back(std::move(x));
    out.feature_mask.push_back(std::move(mask));
  }
  return out;
}

MultimodalBatch concat(std::span<const MultimodalBatch> parts) {
  if (parts.empty()) throw ContractError("concat: no batches");
  MultimodalBatch out;
  out.modalities = parts[0].modalities;
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.modalities != out.modalities) throw ContractError("concat: modality layouts differ");
    if (p.regression() != parts[0].regression()) throw ContractError("concat: task modes differ");
    n += p.size();
  }
  const std::size_t M = out.modalities.size();
  out.present = BoolMatrix(n, M, false);
  for (std::size_t m = 0; m < M; ++m) {
    std::vector<Tensor> blocks;
    for (const auto& p : parts) blocks.push_back(p.features[m]);
    out.features.push_back(ad::concat_rows(blocks));
    out.feature_mask.emplace_back(n, parts[0].features[m].cols(), false);
  }
  std::size_t offset = 0;
  for (const auto& p : parts) {
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    out.scores.insert(out.scores.end(), p.scores.begin(), p.scores.end());
    for (std::size_t i = 0; i < p.size(); ++i) {
      for (std::size_t m = 0; m < M; ++m) {
        out.present.set(offset + i, m, p.present(i, m));
        for (std::size_t j = 0; j < p.features[m].cols(); ++j)
          out.feature_mask[m].set(offset + i, j, p.feature_mask[m](i, j));
      }
    }
    offset += p.size();
  }
  return out;
}

std::vector<std::vector<std::string>> nonempty_subsets(std::span<const std::string> modalities) {
  const std::size_t M = modalities.size();
  std::vector<std::vector<std::string>> out;
  for (std::size_t mask = 1; mask < (std::size_t{1} << M); ++mask) {
    std::vector<std::string> subset;
    for (std::size_t m = 0; m < M; ++m)
      if (mask & (std::size_t{1} << m)) subset.push_back(modalities[m]);
    out.push_back(std::move(subset));
  }
  return out;
}

std::string subset_key(std::span<const std::string> subset) {
  std::string key;
  for (const auto& s : subset) {
    if (!key.empty()) key += '+';
    key += s;
  }
  return key;
}

// Oracle -----------------------------------------------------------------------

std::vector<int> bayes_predict(const GeneratorSpec& spec, const MultimodalBatch& batch,
                               std::span<const std::string> subset) {
  spec.validate();
  if (batch.modalities.size() != spec.modalities.size()) throw ContractError("bayes_oracle: batch/spec mismatch");
  std::vector<std::size_t> used;
  for (const auto& name : subset) {
    const std::size_t m = batch.index_of(name);
    if (spec.modalities[m].name != name || spec.modalities[m].dim != batch.features[m].cols()) {
      throw ContractError("bayes_oracle: batch layout does not match generator spec for '" + name + "'");
    }
    used.push_back(m);
  }
  const auto means = class_means(spec);
  const std::size_t K = spec.num_classes;
  std::vector<int> predictions(batch.size(), 0);
  std::vector<double> loglik(K);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::fill(loglik.begin(), loglik.end(), 0.0);
    for (std::size_t m : used) {
      if (!batch.present(i, m)) continue;
      const auto& mod = spec.modalities[m];
      const double inv_var = 1.0 / (mod.noise * mod.noise);
      for (std::size_t k = 0; k < K; ++k) {
        double ss = 0.0;
        for (std::size_t j = 0; j < mod.dim; ++j) {
          if (!batch.feature_mask[m](i, j)) continue;
          const double r = batch.features[m](i, j) - mod.snr * means[m](k, j);
          ss += r * r;
        }
        loglik[k] -= 0.5 * inv_var * ss;
      }
    }
    // Uniform prior: the posterior argmax is the likelihood argmax (first on ties).
    std::size_t best = 0;
    for (std::size_t k = 1; k < K; ++k)
      if (loglik[k] > loglik[best]) best = k;
    predictions[i] = static_cast<int>(best);
  }
  return predictions;
}

double bayes_accuracy(const GeneratorSpec& spec, const MultimodalBatch& batch, std::span<const std::string> subset) {
  const auto pred = bayes_predict(spec, batch, subset);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == batch.labels[i];
  return batch.size() == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(batch.size());
}

BayesOracleReport bayes_oracle(const GeneratorSpec& spec, const MultimodalBatch& batch) {
  BayesOracleReport report;
  for (const auto& subset : nonempty_subsets(batch.modalities)) {
    report.bayes_accuracy_per_subset[subset_key(subset)] = bayes_accuracy(spec, batch, subset);
  }
  report.bayes_accuracy_full = report.bayes_accuracy_per_subset.at(subset_key(batch.modalities));
  return report;
}

// CSV --------------------------------------------------------------------------

namespace {

std::ofstream open_out(const fs::path& path, const std::string& header) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  if (!header.empty()) out << "# " << header << '\n';
  return out;
}

}  // namespace

void write_batch(const MultimodalBatch& batch, const fs::path& dir, const std::string& header) {
  batch.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());

  for (std::size_t m = 0; m < batch.num_modalities(); ++m) {
    auto out = open_out(dir / (batch.modalities[m] + ".csv"), header);
    const auto& x = batch.features[m];
    for (std::size_t j = 0; j < x.cols(); ++j) out << (j ? "," : "") << 'f' << j;
    out << '\n';
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < x.cols(); ++j) out << (j ? "," : "") << csv::format_double(x(i, j));
      out << '\n';
    }
  }
  {
    auto out = open_out(dir / "labels.csv", header);
    out << (batch.regression() ? "label,score\n" : "label\n");
    for (std::size_t i = 0; i < batch.size(); ++i) {
      out << batch.labels[i];
      if (batch.regression()) out << ',' << csv::format_double(batch.scores[i]);
      out << '\n';
    }
  }
  {
    auto out = open_out(dir / "masks.csv", header);
    bool first = true;
    for (const auto& name : batch.modalities) {
      out << (first ? "" : ",") << "present." << name;
      first = false;
    }
    for (std::size_t m = 0; m < batch.num_modalities(); ++m)
      for (std::size_t j = 0; j < batch.features[m].cols(); ++j) out << ',' << batch.modalities[m] << ".f" << j;
    out << '\n';
    for (std::size_t i = 0; i < batch.size(); ++i) {
      for (std::size_t m = 0; m < batch.num_modalities(); ++m) out << (m ? "," : "") << (batch.present(i, m) ? 1 : 0);
      for (std::size_t m = 0; m < batch.num_modalities(); ++m)
        for (std::size_t j = 0; j < batch.features[m].cols(); ++j) out << ',' << (batch.feature_mask[m](i, j) ? 1 : 0);
      out << '\n';
    }
  }
}

MultimodalBatch read_batch(const fs::path& dir) {
  const auto masks = csv::read(dir / "masks.csv");
  MultimodalBatch batch;
  for (const auto& col : masks.header) {
    if (col.rfind("present.", 0) == 0) batch.modalities.push_back(col.substr(8));
  }
  if (batch.modalities.empty()) throw IoError(dir.string() + ": masks.csv has no present.* columns");

  const auto labels = csv::read(dir / "labels.csv");
  const std::size_t n = labels.rows.size();
  const std::size_t label_col = labels.column("label");
  const bool regression = std::find(labels.header.begin(), labels.header.end(), "score") != labels.header.end();
  for (const auto& row : labels.rows) {
    batch.labels.push_back(static_cast<int>(csv::parse_int(row[label_col])));
    if (regression) batch.scores.push_back(csv::parse_double(row[labels.column("score")]));
  }
  if (masks.rows.size() != n) throw IoError(dir.string() + ": masks.csv row count differs from labels.csv");

  const std::size_t M = batch.modalities.size();
  batch.present = BoolMatrix(n, M, false);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t m = 0; m < M; ++m) batch.present.set(i, m, masks.rows[i][m] == "1");

  for (std::size_t m = 0; m < M; ++m) {
    const auto table = csv::read(dir / (batch.modalities[m] + ".csv"));
    if (table.rows.size() != n) {
      throw IoError(dir.string() + ": " + batch.modalities[m] + ".csv row count differs from labels.csv");
    }
    const std::size_t dim = table.header.size();
    Tensor x(n, dim, 0.0);
    auto d = x.mutable_data();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < dim; ++j) d[i * dim + j] = csv::parse_double(table.rows[i][j]);
    BoolMatrix mask(n, dim, false);
    for (std::size_t j = 0; j < dim; ++j) {
      const std::size_t col = masks.column(batch.modalities[m] + ".f" + std::to_string(j));
      for (std::size_t i = 0; i < n; ++i) mask.set(i, j, masks.rows[i][col] == "1");
    }
    batch.features.push_back(std::move(x));
    batch.feature_mask.push_back(std::move(mask));
  }
  batch.validate();
  return batch;
}

}  // namespace ebmc::data
