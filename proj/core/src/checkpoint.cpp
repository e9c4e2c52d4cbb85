#include "ebmc/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "ebmc/csv.hpp"
#include "ebmc/errors.hpp"

namespace ebmc::checkpoint {

namespace {

constexpr char kMagic[8] = {'E', 'B', 'M', 'C', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError(path + ": truncated checkpoint");
  return v;
}

std::string take_bytes(std::istream& in, std::uint64_t n, const std::string& path) {
  if (n > (std::uint64_t{1} << 32)) throw IoError(path + ": implausible field length");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) throw IoError(path + ": truncated checkpoint");
  return s;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ",") + s;
  return out;
}

}  // namespace

void save(const train::Model& model, const std::map<std::string, std::string>& metadata,
          const std::filesystem::path& path) {
  auto meta = metadata;
  std::vector<std::string> dims;
  for (auto d : model.input_dims) dims.push_back(std::to_string(d));
  meta["model.modalities"] = join(model.modalities);
  meta["model.input_dims"] = join(dims);
  meta["model.num_classes"] = std::to_string(model.num_classes);
  meta["model.mode"] = model.mode == fusion::TaskMode::Regression ? "regression" : "classification";
  meta["model.dims"] = std::to_string(model.dims.mlp_hidden) + "," + std::to_string(model.dims.rep) + "," +
                       std::to_string(model.dims.shared) + "," + std::to_string(model.dims.specific) + "," +
                       std::to_string(model.dims.noise) + "," + std::to_string(model.dims.fusion_hidden);
  std::ostringstream text;
  for (const auto& [k, v] : meta) {
    if (k.find('=') != std::string::npos || k.find('\n') != std::string::npos || v.find('\n') != std::string::npos)
      throw ContractError("checkpoint metadata entries must be single-line key=value");
    text << k << "=" << v << "\n";
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  const std::string t = text.str();
  put<std::uint64_t>(out, t.size());
  out.write(t.data(), static_cast<std::streamsize>(t.size()));
  put<std::uint64_t>(out, model.store.size());
  for (std::size_t i = 0; i < model.store.size(); ++i) {
    const auto& name = model.store.name(i);
    const auto& v = model.store.value(i);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint64_t>(out, v.rows());
    put<std::uint64_t>(out, v.cols());
    out.write(reinterpret_cast<const char*>(v.data().data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Loaded load(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + p);
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw IoError(p + ": not a checkpoint file");
  const auto version = take<std::uint32_t>(in, p);
  if (version != kVersion) throw IoError(p + ": unsupported checkpoint version " + std::to_string(version));
  const std::string text = take_bytes(in, take<std::uint64_t>(in, p), p);

  Loaded loaded;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError(p + ": bad metadata line '" + line + "'");
    loaded.metadata[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto meta = [&](const std::string& key) -> const std::string& {
    const auto it = loaded.metadata.find(key);
    if (it == loaded.metadata.end()) throw IoError(p + ": metadata lacks '" + key + "'");
    return it->second;
  };
  std::vector<std::size_t> input_dims, dims;
  try {
    for (const auto& d : csv::split(meta("model.input_dims"))) input_dims.push_back(csv::parse_int(d));
    for (const auto& d : csv::split(meta("model.dims"))) dims.push_back(csv::parse_int(d));
  } catch (const IoError& e) {
    throw IoError(p + ": " + e.what());
  }
  if (dims.size() != 6) throw IoError(p + ": model.dims needs 6 entries");
  ModelDims md{dims[0], dims[1], dims[2], dims[3], dims[4], dims[5]};
  const auto mode = meta("model.mode") == "regression" ? fusion::TaskMode::Regression : fusion::TaskMode::Classification;
  loaded.model = train::Model::create(csv::split(meta("model.modalities")), input_dims,
                                      static_cast<std::size_t>(csv::parse_int(meta("model.num_classes"))), mode, md, 0);

  auto& store = loaded.model.store;
  const auto count = take<std::uint64_t>(in, p);
  if (count != store.size())
    throw IoError(p + ": holds " + std::to_string(count) + " arrays, model has " + std::to_string(store.size()));
  std::vector<bool> seen(store.size(), false);
  for (std::uint64_t a = 0; a < count; ++a) {
    const std::string name = take_bytes(in, take<std::uint32_t>(in, p), p);
    const auto rows = take<std::uint64_t>(in, p);
    const auto cols = take<std::uint64_t>(in, p);
    const std::size_t idx = store.find(name);
    if (idx == store.size()) throw IoError(p + ": unexpected array '" + name + "'");
    auto& v = store.value(idx);
    if (v.rows() != rows || v.cols() != cols) {
      throw IoError(p + ": array '" + name + "' is " + std::to_string(rows) + "x" + std::to_string(cols) +
                    ", model expects " + v.shape_string());
    }
    auto d = v.mutable_data();
    if (!in.read(reinterpret_cast<char*>(d.data()), static_cast<std::streamsize>(d.size() * sizeof(double))))
      throw IoError(p + ": truncated checkpoint");
    seen[idx] = true;
  }
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (!seen[i]) throw IoError(p + ": missing array '" + store.name(i) + "'");
  return loaded;
}

}  // namespace ebmc::checkpoint
