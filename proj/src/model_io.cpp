#include "kforge/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "kforge/errors.hpp"
#include "kforge/gmm.hpp"

namespace kforge {

namespace {

constexpr char kMagic[8] = {'K', 'F', 'O', 'R', 'G', 'E', 'M', '1'};
constexpr int kFormatVersion = 1;

void append_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void append_f64_le(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t sw = 0;
    for (int i = 0; i < 8; ++i) sw |= ((bits >> (8 * i)) & 0xff) << (8 * (7 - i));
    bits = sw;
  }
  for (int i = 0; i < 8; ++i) out.push_back(char((bits >> (8 * i)) & 0xff));
}

double read_f64_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= std::uint64_t(static_cast<unsigned char>(p[i])) << (8 * i);
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t sw = 0;
    for (int i = 0; i < 8; ++i) sw |= ((bits >> (8 * i)) & 0xff) << (8 * (7 - i));
    bits = sw;
  }
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_model(const std::string& path, const ModelBundle& bundle) {
  nlohmann::json header;
  header["format_version"] = kFormatVersion;
  header["kind"] = bundle.kind;
  header["d"] = bundle.model.d;
  header["base_dim"] = bundle.model.base_dim;
  header["components"] =
      bundle.model.conditionals.empty() ? 0 : bundle.model.conditionals[0].components();
  header["hidden"] = std::vector<int>{ConditionalDensityNetwork::kHidden,
                                      ConditionalDensityNetwork::kHidden,
                                      ConditionalDensityNetwork::kHidden};
  header["skip_connection"] = "pre_nonlinearity";
  header["ordering"] = "natural";
  header["sigma_floor"] = kSigmaFloor;
  header["sigma_cap"] = kSigmaCap;
  header["columns"] = bundle.columns;
  std::vector<std::vector<double>> support;
  for (const auto& s : bundle.model.support) support.push_back({s.first, s.second});
  header["support"] = support;
  header["standardizer"] = {
      {"mean", std::vector<double>(bundle.standardizer.mean.data(),
                                   bundle.standardizer.mean.data() +
                                       bundle.standardizer.mean.size())},
      {"scale", std::vector<double>(bundle.standardizer.scale.data(),
                                    bundle.standardizer.scale.data() +
                                        bundle.standardizer.scale.size())}};
  std::vector<int> param_counts;
  for (const auto& c : bundle.model.conditionals) param_counts.push_back(c.param_count());
  header["param_counts"] = param_counts;
  if (bundle.has_sampler) {
    header["sampler"] = {
        {"logits", std::vector<double>(bundle.sampler.logits.data(),
                                       bundle.sampler.logits.data() +
                                           bundle.sampler.logits.size())},
        {"temperature", bundle.sampler.temperature}};
  }

  const std::string header_str = header.dump();
  std::string out;
  out.append(kMagic, 8);
  append_u32_le(out, std::uint32_t(header_str.size()));
  out += header_str;
  for (const auto& c : bundle.model.conditionals)
    for (int i = 0; i < c.param_count(); ++i) append_f64_le(out, c.params()[i]);
  write_file_atomic(path, out);
}

ModelBundle load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open model file '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw InputError("'" + path + "': not a knockoff-forge model file");
  std::uint32_t hlen = 0;
  for (int i = 0; i < 4; ++i)
    hlen |= std::uint32_t(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
  if (bytes.size() < 12 + hlen) throw InputError("'" + path + "': truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(12, hlen));
  } catch (const std::exception& e) {
    throw InputError("'" + path + "': bad header: " + e.what());
  }
  if (header.value("format_version", -1) != kFormatVersion)
    throw InputError("'" + path + "': unsupported format version");

  ModelBundle bundle;
  bundle.kind = header.at("kind").get<std::string>();
  const int d = header.at("d").get<int>();
  const int base_dim = header.at("base_dim").get<int>();
  const int components = header.at("components").get<int>();
  if (d < 1 || components < 1 || base_dim < 0)
    throw InputError("'" + path + "': invalid dimensions");
  if (bundle.kind == "knockoff" && base_dim != d)
    throw InputError("'" + path + "': knockoff model must have base_dim == d");
  if (bundle.kind == "joint" && base_dim != 0)
    throw InputError("'" + path + "': joint model must have base_dim == 0");
  bundle.columns = header.at("columns").get<std::vector<std::string>>();
  if (int(bundle.columns.size()) != d)
    throw InputError("'" + path + "': column list length mismatch");

  bundle.model.d = d;
  bundle.model.base_dim = base_dim;
  for (const auto& s : header.at("support"))
    bundle.model.support.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
  if (int(bundle.model.support.size()) != d)
    throw InputError("'" + path + "': support length mismatch");

  const auto mean = header.at("standardizer").at("mean").get<std::vector<double>>();
  const auto scale = header.at("standardizer").at("scale").get<std::vector<double>>();
  if (int(mean.size()) != d || int(scale.size()) != d)
    throw InputError("'" + path + "': standardizer length mismatch");
  bundle.standardizer.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), d);
  bundle.standardizer.scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), d);

  const auto param_counts = header.at("param_counts").get<std::vector<int>>();
  if (int(param_counts.size()) != d)
    throw InputError("'" + path + "': parameter block count mismatch");

  size_t off = 12 + hlen;
  for (int j = 0; j < d; ++j) {
    ConditionalDensityNetwork net(base_dim + j, components);
    if (net.param_count() != param_counts[j])
      throw InputError("'" + path + "': parameter block size mismatch at conditional " +
                       std::to_string(j));
    if (bytes.size() < off + size_t(net.param_count()) * 8)
      throw InputError("'" + path + "': truncated parameter block");
    for (int i = 0; i < net.param_count(); ++i) {
      net.params()[i] = read_f64_le(bytes.data() + off);
      off += 8;
    }
    bundle.model.conditionals.push_back(std::move(net));
  }
  if (off != bytes.size())
    throw InputError("'" + path + "': trailing bytes after parameter blocks");

  if (header.contains("sampler")) {
    const auto logits = header.at("sampler").at("logits").get<std::vector<double>>();
    bundle.sampler = SwapSampler(int(logits.size()),
                                 header.at("sampler").at("temperature").get<double>());
    bundle.sampler.logits = Eigen::Map<const Eigen::VectorXd>(logits.data(),
                                                              Eigen::Index(logits.size()));
    bundle.has_sampler = true;
  }
  return bundle;
}

}  // namespace kforge
