#include "geoslomo/networks.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "geoslomo/errors.hpp"
#include "geoslomo/log.hpp"

namespace geoslomo {

namespace F = torch::nn::functional;

// ---------------------------------------------------------------------------
// Specs

namespace {

// Multi-scale split of n channels into the 3/5/7 branches.
std::array<int, 3> branch_split(int n) {
  const int a = (n + 2) / 3;
  return {a, a, n - 2 * a};
}

constexpr std::array<int, 3> kBranchKernels{3, 5, 7};

std::string block_name(BlockKind k) { return k == BlockKind::standard ? "standard" : "multi-scale"; }

BlockKind parse_block(const std::string& s) {
  if (s == "standard") return BlockKind::standard;
  if (s == "multi-scale") return BlockKind::multi_scale;
  throw ParameterError("block_kind", "unknown block kind '" + s + "'");
}

}  // namespace

void UNetSpec::validate() const {
  auto positive = [](int v, const char* field) {
    if (v < 1) throw ParameterError(field, "must be positive");
  };
  auto odd = [](int k, const char* field) {
    if (k < 1 || k % 2 == 0) throw ParameterError(field, "kernel sizes must be odd and positive");
  };
  positive(in_channels, "in_channels");
  positive(out_channels, "out_channels");
  positive(stem_channels, "stem_channels");
  odd(stem_kernel, "stem_kernel");
  odd(up_kernel, "up_kernel");
  odd(head_kernel, "head_kernel");
  for (int i = 0; i < 4; ++i) {
    positive(down_channels[i], "down_channels");
    positive(up_channels[i], "up_channels");
    odd(down_kernels[i], "down_kernels");
  }
  if (block_kind == BlockKind::multi_scale) {
    // Every multi-scale unit needs a non-empty slice per branch on both sides.
    auto splittable = [](int n, const char* field) {
      if (branch_split(n)[2] < 1) {
        throw ParameterError(field, "width " + std::to_string(n) + " cannot be split over three branches");
      }
    };
    int prev = stem_channels;
    std::array<int, 5> skips{stem_channels, 0, 0, 0, 0};
    for (int i = 0; i < 4; ++i) {
      splittable(prev, "down_channels");
      splittable(down_channels[i], "down_channels");
      prev = down_channels[i];
      skips[i + 1] = prev;
    }
    for (int i = 0; i < 4; ++i) {
      splittable(prev + skips[3 - i], "up_channels");
      splittable(up_channels[i], "up_channels");
      prev = up_channels[i];
    }
  }
}

std::string UNetSpec::canonical() const {
  std::ostringstream os;
  os << "unet/in=" << in_channels << "/out=" << out_channels << "/stem=" << stem_channels << "k" << stem_kernel
     << "/down=";
  for (int i = 0; i < 4; ++i) os << down_channels[i] << "k" << down_kernels[i] << (i < 3 ? "," : "");
  os << "/up=";
  for (int i = 0; i < 4; ++i) os << up_channels[i] << (i < 3 ? "," : "");
  os << "k" << up_kernel << "/head=k" << head_kernel << "/block=" << block_name(block_kind);
  return os.str();
}

ChannelPlan ChannelPlan::scaled(double factor) {
  if (!(factor > 0.0)) throw ParameterError("width", "channel scale must be positive");
  auto s = [factor](int c) { return std::max(3, static_cast<int>(std::lround(c * factor))); };
  ChannelPlan p;
  p.stem = s(p.stem);
  for (auto& c : p.down) c = s(c);
  for (auto& c : p.up) c = s(c);
  return p;
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::global: return "SSM-G";
    case Variant::task: return "SSM-T";
    case Variant::task_multiscale: return "SSM-TMS";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  if (name == "SSM-G" || name == "ssm-g") return Variant::global;
  if (name == "SSM-T" || name == "ssm-t") return Variant::task;
  if (name == "SSM-TMS" || name == "ssm-tms") return Variant::task_multiscale;
  throw ParameterError("variant", "expected one of ssm-g, ssm-t, ssm-tms, got '" + name + "'");
}

ModelSpec ModelSpec::make(Variant variant, std::optional<int> band, const ChannelPlan& plan) {
  ModelSpec m;
  m.variant = variant;
  m.band = band;
  m.channels = 1;
  const BlockKind kind = variant == Variant::task_multiscale ? BlockKind::multi_scale : BlockKind::standard;
  for (UNetSpec* net : {&m.flow_net, &m.interp_net}) {
    net->stem_channels = plan.stem;
    net->down_channels = plan.down;
    net->up_channels = plan.up;
    net->block_kind = kind;
  }
  m.flow_net.in_channels = 2 * m.channels;
  m.flow_net.out_channels = 4 * m.channels;
  m.interp_net.in_channels = 8 * m.channels;
  m.interp_net.out_channels = 5 * m.channels;
  m.validate();
  return m;
}

void ModelSpec::validate() const {
  if (channels != 1) throw ParameterError("channels", "models operate on one channel per sample");
  if (variant == Variant::global) {
    if (band) throw ParameterError("band", "SSM-G is trained across all bands and takes no band");
  } else {
    if (!band) throw ParameterError("band", variant_name(variant) + " is task-specific and requires a band");
    abi_band(*band);
  }
  if (flow_net.in_channels != 2 * channels || flow_net.out_channels != 4 * channels) {
    throw ParameterError("flow_net", "flow network must map 2C inputs to 4C outputs");
  }
  if (interp_net.in_channels != 8 * channels || interp_net.out_channels != 5 * channels) {
    throw ParameterError("interp_net", "interpolation network must map 8C inputs to 5C outputs");
  }
  const BlockKind expected = variant == Variant::task_multiscale ? BlockKind::multi_scale : BlockKind::standard;
  if (flow_net.block_kind != expected || interp_net.block_kind != expected) {
    throw ParameterError("block_kind", "block kind does not match variant " + variant_name(variant));
  }
  flow_net.validate();
  interp_net.validate();
}

std::string ModelSpec::fingerprint() const {
  const std::string text = "flow:" + flow_net.canonical() + "|interp:" + interp_net.canonical();
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

// ---------------------------------------------------------------------------
// Modules

namespace {

torch::nn::Conv2d same_conv(int in, int out, int kernel) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel).padding(kernel / 2));
}

void init_conv(torch::nn::Conv2d& conv, bool relu_follows) {
  torch::NoGradGuard no_grad;
  if (relu_follows) {
    torch::nn::init::kaiming_uniform_(conv->weight, 0.0, torch::kFanIn, torch::kReLU);
  } else {
    torch::nn::init::kaiming_uniform_(conv->weight, 0.0, torch::kFanIn, torch::kLinear);
  }
  torch::nn::init::zeros_(conv->bias);
}

}  // namespace

ConvUnitImpl::ConvUnitImpl(int in_channels, int out_channels, int kernel, BlockKind kind) : kind_(kind) {
  branches_ = register_module("branches", torch::nn::ModuleList());
  if (kind_ == BlockKind::standard) {
    auto conv = same_conv(in_channels, out_channels, kernel);
    init_conv(conv, true);
    branches_->push_back(conv);
    input_slices_.emplace_back(0, in_channels);
    return;
  }
  const auto in_split = branch_split(in_channels);
  const auto out_split = branch_split(out_channels);
  int64_t offset = 0;
  for (int b = 0; b < 3; ++b) {
    auto conv = same_conv(in_split[b], out_split[b], kBranchKernels[b]);
    init_conv(conv, true);
    branches_->push_back(conv);
    input_slices_.emplace_back(offset, in_split[b]);
    offset += in_split[b];
  }
  // Round-robin over the three branch outputs so the next grouped unit sees
  // features of every kernel size.
  std::vector<int64_t> perm;
  std::array<int64_t, 3> start{0, out_split[0], out_split[0] + out_split[1]};
  for (int i = 0; static_cast<int64_t>(perm.size()) < out_channels; ++i) {
    for (int b = 0; b < 3; ++b) {
      if (i < out_split[b]) perm.push_back(start[b] + i);
    }
  }
  shuffle_ = torch::tensor(perm, torch::kLong);
}

torch::Tensor ConvUnitImpl::forward(const torch::Tensor& x) {
  if (kind_ == BlockKind::standard) return branches_[0]->as<torch::nn::Conv2dImpl>()->forward(x);
  std::vector<torch::Tensor> outs;
  outs.reserve(3);
  for (std::size_t b = 0; b < 3; ++b) {
    const auto [off, len] = input_slices_[b];
    outs.push_back(branches_[b]->as<torch::nn::Conv2dImpl>()->forward(x.narrow(1, off, len)));
  }
  return torch::cat(outs, 1).index_select(1, shuffle_);
}

namespace {

torch::nn::Sequential stage(int in, int out, int kernel, BlockKind kind) {
  return torch::nn::Sequential(ConvUnit(in, out, kernel, kind), torch::nn::ReLU(),
                               ConvUnit(out, out, kernel, kind), torch::nn::ReLU());
}

}  // namespace

UNetImpl::UNetImpl(const UNetSpec& spec) : spec_(spec) {
  spec_.validate();
  stem_ = register_module("stem", same_conv(spec.in_channels, spec.stem_channels, spec.stem_kernel));
  init_conv(stem_, true);
  down_ = register_module("down", torch::nn::ModuleList());
  up_ = register_module("up", torch::nn::ModuleList());
  std::array<int, 5> skips{spec.stem_channels, 0, 0, 0, 0};
  int prev = spec.stem_channels;
  for (int i = 0; i < 4; ++i) {
    down_->push_back(stage(prev, spec.down_channels[i], spec.down_kernels[i], spec.block_kind));
    prev = spec.down_channels[i];
    skips[i + 1] = prev;
  }
  for (int i = 0; i < 4; ++i) {
    up_->push_back(stage(prev + skips[3 - i], spec.up_channels[i], spec.up_kernel, spec.block_kind));
    prev = spec.up_channels[i];
  }
  head = register_module("head", same_conv(prev, spec.out_channels, spec.head_kernel));
  init_conv(head, false);
}

torch::Tensor UNetImpl::forward(const torch::Tensor& input) {
  if (input.dim() != 4 || input.size(1) != spec_.in_channels) {
    throw ContractError("UNet: expected (N, " + std::to_string(spec_.in_channels) + ", H, W) input");
  }
  if (input.size(2) % 16 != 0 || input.size(3) % 16 != 0) {
    throw ContractError("UNet: H and W must be divisible by 16, got " + std::to_string(input.size(2)) + "x" +
                        std::to_string(input.size(3)));
  }
  std::array<torch::Tensor, 4> skips;
  auto x = torch::relu(stem_->forward(input));
  skips[0] = x;
  for (std::size_t i = 0; i < 4; ++i) {
    x = F::avg_pool2d(x, F::AvgPool2dFuncOptions(2));
    x = down_[i]->as<torch::nn::SequentialImpl>()->forward(x);
    if (i < 3) skips[i + 1] = x;
  }
  for (std::size_t i = 0; i < 4; ++i) {
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .scale_factor(std::vector<double>{2.0, 2.0})
                              .mode(torch::kBilinear)
                              .align_corners(false));
    x = torch::cat({x, skips[3 - i]}, 1);
    x = up_[i]->as<torch::nn::SequentialImpl>()->forward(x);
  }
  return head->forward(x);
}

SlomoNetImpl::SlomoNetImpl(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)), seed_(seed) {
  spec_.validate();
  // Initialize from `seed` without disturbing the global generator's stream.
  // The sampling kernels take the generator's mutex themselves, so it is not
  // held here; construct networks from one thread at a time.
  auto gen = at::detail::getDefaultCPUGenerator();
  const auto saved = gen.get_state();
  gen.set_current_seed(seed_);
  try {
    flow_net = register_module("flow_net", UNet(spec_.flow_net));
    interp_net = register_module("interp_net", UNet(spec_.interp_net));
  } catch (...) {
    gen.set_state(saved);
    throw;
  }
  gen.set_state(saved);
}

namespace {

void check_pair(const torch::Tensor& i0, const torch::Tensor& i1, int channels) {
  if (i0.dim() != 4 || !i0.sizes().equals(i1.sizes()) || i0.size(1) != channels) {
    throw ContractError("flow_forward: expected two equal (N, " + std::to_string(channels) + ", H, W) inputs");
  }
}

}  // namespace

FlowPair split_flow_output(const torch::Tensor& raw, int channels) {
  const int64_t c2 = 2 * channels;
  if (raw.dim() != 4 || raw.size(1) != 2 * c2) throw ContractError("split_flow_output: expected (N, 4C, H, W)");
  return {raw.narrow(1, 0, c2), raw.narrow(1, c2, c2)};
}

InterpOutput decode_interp_output(const torch::Tensor& raw, const torch::Tensor& fhat_t0,
                                  const torch::Tensor& fhat_t1, int channels) {
  const int64_t c = channels;
  if (raw.dim() != 4 || raw.size(1) != 5 * c) throw ContractError("decode_interp_output: expected (N, 5C, H, W)");
  InterpOutput r;
  r.f_t0 = fhat_t0 + raw.narrow(1, 0, 2 * c);
  r.f_t1 = fhat_t1 + raw.narrow(1, 2 * c, 2 * c);
  r.v0 = torch::sigmoid(raw.narrow(1, 4 * c, c)).clamp(kVisibilityEpsilon, 1.0f - kVisibilityEpsilon);
  r.v1 = 1 - r.v0;
  return r;
}

PipelineOutput complete_pipeline(const torch::Tensor& i0, const torch::Tensor& i1, const FlowPair& flows,
                                 const torch::Tensor& t, const InterpHead& head, int channels) {
  PipelineOutput p;
  p.flows = flows;
  p.approx = approx_intermediate_flows(flows.f01, flows.f10, t);
  p.g0 = backward_warp(i0, p.approx.to_start);
  p.g1 = backward_warp(i1, p.approx.to_end);
  const auto raw = head(torch::cat({i0, i1, p.approx.to_start, p.approx.to_end, p.g0, p.g1}, 1));
  p.refined = decode_interp_output(raw, p.approx.to_start, p.approx.to_end, channels);
  p.warped0 = backward_warp(i0, p.refined.f_t0);
  p.warped1 = backward_warp(i1, p.refined.f_t1);
  p.prediction = blend_visibility(p.warped0, p.warped1, p.refined.v0, p.refined.v1, t);
  return p;
}

FlowPair SlomoNetImpl::flow_forward(const torch::Tensor& i0, const torch::Tensor& i1) {
  check_pair(i0, i1, spec_.channels);
  if (log::level() <= log::Level::warn) {
    const double m = torch::cat({i0, i1}, 1).mean().item<double>();
    if (std::abs(m) > 5.0) log::warn("flow_forward: input mean ", m, " suggests unnormalized frames");
  }
  return split_flow_output(flow_net->forward(torch::cat({i0, i1}, 1)), spec_.channels);
}

InterpOutput SlomoNetImpl::interp_forward(const torch::Tensor& i0, const torch::Tensor& i1,
                                          const torch::Tensor& fhat_t0, const torch::Tensor& fhat_t1,
                                          const torch::Tensor& g0, const torch::Tensor& g1) {
  check_pair(i0, i1, spec_.channels);
  const int64_t c = spec_.channels;
  auto expect = [&](const torch::Tensor& t, int64_t ch, const char* name) {
    if (t.dim() != 4 || t.size(0) != i0.size(0) || t.size(1) != ch || t.size(2) != i0.size(2) ||
        t.size(3) != i0.size(3)) {
      throw ContractError(std::string("interp_forward: ") + name + " has the wrong shape");
    }
  };
  expect(fhat_t0, 2 * c, "fhat_t0");
  expect(fhat_t1, 2 * c, "fhat_t1");
  expect(g0, c, "g0");
  expect(g1, c, "g1");
  auto raw = interp_net->forward(torch::cat({i0, i1, fhat_t0, fhat_t1, g0, g1}, 1));
  return decode_interp_output(raw, fhat_t0, fhat_t1, spec_.channels);
}

PipelineOutput SlomoNetImpl::forward(const torch::Tensor& i0, const torch::Tensor& i1, const torch::Tensor& t) {
  auto flows = flow_forward(i0, i1);
  return complete_pipeline(i0, i1, flows, t, [this](const torch::Tensor& x) { return interp_net->forward(x); },
                           spec_.channels);
}

std::int64_t param_count(const torch::nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

std::int64_t param_count(const ModelSpec& spec) {
  SlomoNet net(spec, 0);
  return param_count(*net);
}

Grid interpolate(SlomoNet& net, const ChannelStats& stats, const Grid& i0, const Grid& i1, BlendTime t) {
  require_same_shape(i0, i1, "interpolate");
  torch::NoGradGuard no_grad;
  auto a = to_tensor(normalize(i0, stats));
  auto b = to_tensor(normalize(i1, stats));
  // Replicate-pad to the next multiple of 16 and crop the prediction back.
  const auto H = static_cast<int64_t>(i0.height()), W = static_cast<int64_t>(i0.width());
  const int64_t ph = (16 - H % 16) % 16, pw = (16 - W % 16) % 16;
  if (ph || pw) {
    namespace F = torch::nn::functional;
    auto opts = F::PadFuncOptions({0, pw, 0, ph}).mode(torch::kReplicate);
    a = F::pad(a, opts);
    b = F::pad(b, opts);
  }
  auto out = net->forward(a, b, time_tensor(t.value())).prediction;
  out = out.narrow(2, 0, H).narrow(3, 0, W);
  return denormalize(grid_from_tensor(out), stats);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

nlohmann::json unet_json(const UNetSpec& s) {
  return {{"in_channels", s.in_channels},     {"out_channels", s.out_channels},
          {"stem_channels", s.stem_channels}, {"stem_kernel", s.stem_kernel},
          {"down_channels", s.down_channels}, {"down_kernels", s.down_kernels},
          {"up_channels", s.up_channels},     {"up_kernel", s.up_kernel},
          {"head_kernel", s.head_kernel},     {"block_kind", block_name(s.block_kind)}};
}

UNetSpec unet_from_json(const nlohmann::json& j) {
  UNetSpec s;
  s.in_channels = j.at("in_channels").get<int>();
  s.out_channels = j.at("out_channels").get<int>();
  s.stem_channels = j.at("stem_channels").get<int>();
  s.stem_kernel = j.at("stem_kernel").get<int>();
  s.down_channels = j.at("down_channels").get<std::array<int, 4>>();
  s.down_kernels = j.at("down_kernels").get<std::array<int, 4>>();
  s.up_channels = j.at("up_channels").get<std::array<int, 4>>();
  s.up_kernel = j.at("up_kernel").get<int>();
  s.head_kernel = j.at("head_kernel").get<int>();
  s.block_kind = parse_block(j.at("block_kind").get<std::string>());
  return s;
}

std::vector<std::pair<std::string, torch::Tensor>> named_state(const torch::nn::Module& module) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : module.named_parameters(true)) out.emplace_back(item.key(), item.value());
  for (const auto& item : module.named_buffers(true)) out.emplace_back(item.key(), item.value());
  return out;
}

}  // namespace

std::string manifest_to_json(const Manifest& m, const std::string& fingerprint) {
  nlohmann::json j;
  j["variant"] = variant_name(m.spec.variant);
  j["band_scope"] = m.spec.band ? nlohmann::json(*m.spec.band) : nlohmann::json("all");
  j["channels"] = m.spec.channels;
  j["architecture"] = {{"flow_net", unet_json(m.spec.flow_net)}, {"interp_net", unet_json(m.spec.interp_net)}};
  j["fingerprint"] = fingerprint;
  nlohmann::json norm = nlohmann::json::object();
  for (const auto& [band, s] : m.norm.bands()) norm[std::to_string(band)] = {{"mean", s.mean}, {"std", s.std}};
  j["norm"] = norm;
  j["lambdas"] = {{"lambda_r", m.weights.lambda_r}, {"lambda_w", m.weights.lambda_w}, {"lambda_s", m.weights.lambda_s}};
  j["seed"] = m.seed;
  j["step"] = m.step;
  return j.dump(2);
}

std::pair<Manifest, std::string> manifest_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    Manifest m;
    m.spec.variant = parse_variant(j.at("variant").get<std::string>());
    const auto& scope = j.at("band_scope");
    if (scope.is_string()) {
      if (scope.get<std::string>() != "all") throw ValidationError("manifest: band_scope must be a band id or \"all\"");
    } else {
      m.spec.band = scope.get<int>();
    }
    m.spec.channels = j.at("channels").get<int>();
    m.spec.flow_net = unet_from_json(j.at("architecture").at("flow_net"));
    m.spec.interp_net = unet_from_json(j.at("architecture").at("interp_net"));
    m.spec.validate();
    for (const auto& [band, s] : j.at("norm").items()) {
      m.norm.set(std::stoi(band), {s.at("mean").get<double>(), s.at("std").get<double>()});
    }
    const auto& l = j.at("lambdas");
    m.weights = {l.at("lambda_r").get<double>(), l.at("lambda_w").get<double>(), l.at("lambda_s").get<double>()};
    m.seed = j.at("seed").get<std::uint64_t>();
    m.step = j.at("step").get<std::int64_t>();
    return {m, j.at("fingerprint").get<std::string>()};
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("manifest: ") + e.what());
  }
}

Checkpoint Checkpoint::capture(const SlomoNet& net, Manifest manifest) {
  Checkpoint c;
  manifest.spec = net->spec();
  c.manifest_ = std::move(manifest);
  c.fingerprint_ = c.manifest_.spec.fingerprint();
  torch::NoGradGuard no_grad;
  for (auto& [name, t] : named_state(*net)) c.state_.emplace_back(name, t.detach().clone());
  return c;
}

void Checkpoint::restore_into(SlomoNet& net) const {
  if (net->spec().fingerprint() != fingerprint_) {
    throw ContractError("checkpoint fingerprint " + fingerprint_ + " does not match architecture " +
                        net->spec().fingerprint());
  }
  auto target = named_state(*net);
  if (target.size() != state_.size()) throw ContractError("checkpoint: tensor count mismatch");
  torch::NoGradGuard no_grad;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i].first != state_[i].first || !target[i].second.sizes().equals(state_[i].second.sizes())) {
      throw ContractError("checkpoint: tensor '" + state_[i].first + "' does not match the model");
    }
    target[i].second.copy_(state_[i].second);
  }
}

SlomoNet Checkpoint::instantiate() const {
  SlomoNet net(manifest_.spec, manifest_.seed);
  restore_into(net);
  return net;
}

void Checkpoint::save(const std::filesystem::path& dir) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  torch::serialize::OutputArchive archive;
  for (const auto& [name, t] : state_) archive.write(name, t);
  try {
    archive.save_to((dir / kWeightsFile).string());
  } catch (const c10::Error& e) {
    throw IoError("cannot write " + (dir / kWeightsFile).string() + ": " + e.what_without_backtrace());
  }
  std::ofstream out(dir / kManifestFile, std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / kManifestFile).string());
  out << manifest_to_json(manifest_, fingerprint_) << '\n';
  if (!out) throw IoError("short write to " + (dir / kManifestFile).string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / kManifestFile);
  if (!in) throw IoError("cannot open " + (dir / kManifestFile).string());
  std::stringstream ss;
  ss << in.rdbuf();
  auto [manifest, fingerprint] = manifest_from_json(ss.str());
  if (manifest.spec.fingerprint() != fingerprint) {
    throw ContractError("checkpoint " + dir.string() + ": recorded fingerprint " + fingerprint +
                        " does not match its architecture (" + manifest.spec.fingerprint() + ")");
  }
  Checkpoint c;
  c.manifest_ = std::move(manifest);
  c.fingerprint_ = fingerprint;
  torch::serialize::InputArchive archive;
  try {
    archive.load_from((dir / kWeightsFile).string());
  } catch (const c10::Error& e) {
    throw IoError("cannot read " + (dir / kWeightsFile).string() + ": " + e.what_without_backtrace());
  }
  // Tensor names and order come from a freshly built model of the same plan.
  SlomoNet reference(c.manifest_.spec, 0);
  for (const auto& [name, t] : named_state(*reference)) {
    torch::Tensor value;
    if (!archive.try_read(name, value)) throw ContractError("checkpoint: missing tensor '" + name + "'");
    if (!value.sizes().equals(t.sizes())) throw ContractError("checkpoint: tensor '" + name + "' has the wrong shape");
    c.state_.emplace_back(name, value);
  }
  return c;
}

}  // namespace geoslomo
