#include "edtd7/datasets.hpp"

#include <hdf5.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>

#include "edtd7/errors.hpp"

namespace edtd7 {

TransitionDataset::TransitionDataset(std::string name, int state_dim, int action_dim)
    : name_(std::move(name)), state_dim_(state_dim), action_dim_(action_dim) {
  if (state_dim <= 0 || action_dim <= 0) {
    throw ParameterError("dataset dimensions must be positive");
  }
}

void TransitionDataset::reserve(std::size_t n) {
  states_.reserve(n * state_dim_);
  actions_.reserve(n * action_dim_);
  rewards_.reserve(n);
  next_states_.reserve(n * state_dim_);
  terminals_.reserve(n);
}

void TransitionDataset::push_back(const Transition& t) {
  if (static_cast<int>(t.state.size()) != state_dim_ || static_cast<int>(t.next_state.size()) != state_dim_) {
    throw ParameterError("transition state dimension does not match dataset");
  }
  if (static_cast<int>(t.action.size()) != action_dim_) {
    throw ParameterError("transition action dimension does not match dataset");
  }
  auto finite = [](float v) { return std::isfinite(v); };
  if (!std::ranges::all_of(t.state, finite) || !std::ranges::all_of(t.next_state, finite) ||
      !std::ranges::all_of(t.action, finite) || !std::isfinite(t.reward)) {
    throw DataError("transition contains non-finite values");
  }
  if (!std::ranges::all_of(t.action, [](float v) { return v >= -1.0f && v <= 1.0f; })) {
    throw DataError("transition action outside [-1, 1]");
  }
  states_.insert(states_.end(), t.state.begin(), t.state.end());
  actions_.insert(actions_.end(), t.action.begin(), t.action.end());
  rewards_.push_back(t.reward);
  next_states_.insert(next_states_.end(), t.next_state.begin(), t.next_state.end());
  terminals_.push_back(t.terminal ? 1 : 0);
}

std::span<const float> TransitionDataset::state(std::size_t i) const {
  return {states_.data() + i * state_dim_, static_cast<std::size_t>(state_dim_)};
}

std::span<const float> TransitionDataset::action(std::size_t i) const {
  return {actions_.data() + i * action_dim_, static_cast<std::size_t>(action_dim_)};
}

std::span<const float> TransitionDataset::next_state(std::size_t i) const {
  return {next_states_.data() + i * state_dim_, static_cast<std::size_t>(state_dim_)};
}

Transition TransitionDataset::at(std::size_t i) const {
  if (i >= size()) throw ParameterError("transition index out of range");
  auto s = state(i);
  auto a = action(i);
  auto sn = next_state(i);
  return Transition{{s.begin(), s.end()}, {a.begin(), a.end()}, rewards_[i], {sn.begin(), sn.end()}, terminal(i)};
}

namespace {

// Owns one HDF5 identifier and closes it with the matching H5*close call.
class H5Handle {
 public:
  using Closer = herr_t (*)(hid_t);
  H5Handle(hid_t id, Closer closer) : id_(id), closer_(closer) {}
  H5Handle(const H5Handle&) = delete;
  H5Handle& operator=(const H5Handle&) = delete;
  H5Handle(H5Handle&& other) noexcept : id_(std::exchange(other.id_, H5I_INVALID_HID)), closer_(other.closer_) {}
  ~H5Handle() {
    if (id_ >= 0) closer_(id_);
  }
  [[nodiscard]] hid_t get() const { return id_; }
  [[nodiscard]] bool valid() const { return id_ >= 0; }

 private:
  hid_t id_;
  Closer closer_;
};

// Silences the default HDF5 error stack printer for the lifetime of the guard.
class H5QuietErrors {
 public:
  H5QuietErrors() {
    H5Eget_auto2(H5E_DEFAULT, &func_, &data_);
    H5Eset_auto2(H5E_DEFAULT, nullptr, nullptr);
  }
  ~H5QuietErrors() { H5Eset_auto2(H5E_DEFAULT, func_, data_); }

 private:
  H5E_auto2_t func_ = nullptr;
  void* data_ = nullptr;
};

struct Array {
  std::vector<hsize_t> dims;
  std::vector<double> values;
};

bool has_key(hid_t file, const std::string& key) {
  return H5Lexists(file, key.c_str(), H5P_DEFAULT) > 0;
}

Array read_array(hid_t file, const std::string& key) {
  if (!has_key(file, key)) throw SchemaError("missing dataset key '" + key + "'");
  H5Handle dset(H5Dopen2(file, key.c_str(), H5P_DEFAULT), H5Dclose);
  if (!dset.valid()) throw SchemaError("cannot open dataset '" + key + "'");
  H5Handle space(H5Dget_space(dset.get()), H5Sclose);
  int rank = H5Sget_simple_extent_ndims(space.get());
  if (rank < 1 || rank > 2) throw SchemaError("dataset '" + key + "' must be rank 1 or 2");
  Array out;
  out.dims.resize(rank);
  H5Sget_simple_extent_dims(space.get(), out.dims.data(), nullptr);
  hsize_t count = 1;
  for (auto d : out.dims) count *= d;
  out.values.resize(count);
  if (count == 0) return out;

  H5Handle ftype(H5Dget_type(dset.get()), H5Tclose);
  H5T_class_t cls = H5Tget_class(ftype.get());
  if (cls == H5T_FLOAT || cls == H5T_INTEGER) {
    if (H5Dread(dset.get(), H5T_NATIVE_DOUBLE, H5S_ALL, H5S_ALL, H5P_DEFAULT, out.values.data()) < 0) {
      throw SchemaError("cannot read dataset '" + key + "'");
    }
  } else if (cls == H5T_ENUM) {
    // Boolean arrays written by h5py are 1-byte enums; read the raw bytes.
    H5Handle mtype(H5Tget_native_type(ftype.get(), H5T_DIR_ASCEND), H5Tclose);
    std::size_t width = H5Tget_size(mtype.get());
    std::vector<unsigned char> raw(count * width);
    if (H5Dread(dset.get(), mtype.get(), H5S_ALL, H5S_ALL, H5P_DEFAULT, raw.data()) < 0) {
      throw SchemaError("cannot read dataset '" + key + "'");
    }
    for (hsize_t i = 0; i < count; ++i) {
      bool nonzero = std::any_of(raw.begin() + i * width, raw.begin() + (i + 1) * width,
                                 [](unsigned char c) { return c != 0; });
      out.values[i] = nonzero ? 1.0 : 0.0;
    }
  } else {
    throw SchemaError("dataset '" + key + "' has unsupported element type");
  }
  return out;
}

hsize_t rows(const Array& a) { return a.dims[0]; }
hsize_t cols(const Array& a) { return a.dims.size() == 2 ? a.dims[1] : 1; }

void require_vector(const Array& a, const std::string& key) {
  if (cols(a) != 1) throw SchemaError("dataset '" + key + "' must be one value per row");
}

void require_finite(const Array& a, const std::string& key) {
  if (!std::ranges::all_of(a.values, [](double v) { return std::isfinite(v); })) {
    throw DataError("dataset '" + key + "' contains non-finite values");
  }
}

void write_array(hid_t file, const std::string& key, hid_t mem_type, hid_t file_type,
                 std::vector<hsize_t> dims, const void* data) {
  H5Handle space(H5Screate_simple(static_cast<int>(dims.size()), dims.data(), nullptr), H5Sclose);
  H5Handle dset(H5Dcreate2(file, key.c_str(), file_type, space.get(), H5P_DEFAULT, H5P_DEFAULT, H5P_DEFAULT),
                H5Dclose);
  if (!dset.valid()) throw std::runtime_error("cannot create dataset '" + key + "'");
  if (H5Dwrite(dset.get(), mem_type, H5S_ALL, H5S_ALL, H5P_DEFAULT, data) < 0) {
    throw std::runtime_error("cannot write dataset '" + key + "'");
  }
}

}  // namespace

TransitionDataset load_hdf5_dataset(const std::filesystem::path& path, const LoadOptions& options) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("dataset file not found: " + path.string());
  H5QuietErrors quiet;
  H5Handle file(H5Fopen(path.c_str(), H5F_ACC_RDONLY, H5P_DEFAULT), H5Fclose);
  if (!file.valid()) throw SchemaError("not a readable HDF5 file: " + path.string());

  Array obs = read_array(file.get(), "observations");
  Array act = read_array(file.get(), "actions");
  Array rew = read_array(file.get(), "rewards");
  Array term = read_array(file.get(), "terminals");
  Array tout = read_array(file.get(), "timeouts");
  require_vector(rew, "rewards");
  require_vector(term, "terminals");
  require_vector(tout, "timeouts");

  const hsize_t T = rows(obs);
  if (rows(act) != T || rows(rew) != T || rows(term) != T || rows(tout) != T) {
    throw SchemaError("array lengths disagree across keys");
  }
  if (T == 0) throw SchemaError("dataset has no rows");

  const bool has_next = has_key(file.get(), "next_observations");
  Array next;
  if (has_next) {
    next = read_array(file.get(), "next_observations");
    if (rows(next) != T || cols(next) != cols(obs)) {
      throw SchemaError("next_observations shape disagrees with observations");
    }
    require_finite(next, "next_observations");
  }
  require_finite(obs, "observations");
  require_finite(act, "actions");
  require_finite(rew, "rewards");

  const int ds = static_cast<int>(cols(obs));
  const int da = static_cast<int>(cols(act));
  TransitionDataset dataset(path.stem().string(), ds, da);
  dataset.reserve(T);

  Transition t;
  t.state.resize(ds);
  t.next_state.resize(ds);
  t.action.resize(da);
  for (hsize_t i = 0; i < T; ++i) {
    const bool is_terminal = term.values[i] != 0.0;
    const bool is_timeout = tout.values[i] != 0.0;
    // A terminal row keeps its transition: the successor is never bootstrapped.
    if (!has_next && !is_terminal && (is_timeout || i + 1 == T)) continue;
    const hsize_t succ = (has_next || i + 1 == T) ? i : i + 1;

    for (int k = 0; k < ds; ++k) {
      t.state[k] = static_cast<float>(obs.values[i * ds + k]);
      t.next_state[k] = static_cast<float>(has_next ? next.values[i * ds + k] : obs.values[succ * ds + k]);
    }
    for (int k = 0; k < da; ++k) {
      float v = static_cast<float>(act.values[i * da + k]);
      if (v < -1.0f || v > 1.0f) {
        if (!options.clamp_actions) throw DataError("action outside [-1, 1] at row " + std::to_string(i));
        v = std::clamp(v, -1.0f, 1.0f);
      }
      t.action[k] = v;
    }
    t.reward = static_cast<float>(rew.values[i]);
    t.terminal = is_terminal && !is_timeout;
    dataset.push_back(t);
  }
  if (dataset.empty()) throw SchemaError("no usable transitions in " + path.string());
  return dataset;
}

void write_hdf5_dataset(const TransitionDataset& dataset, const std::filesystem::path& path) {
  H5QuietErrors quiet;
  H5Handle file(H5Fcreate(path.c_str(), H5F_ACC_TRUNC, H5P_DEFAULT, H5P_DEFAULT), H5Fclose);
  if (!file.valid()) throw std::runtime_error("cannot create HDF5 file: " + path.string());
  const hsize_t T = dataset.size();
  const hsize_t ds = dataset.state_dim();
  const hsize_t da = dataset.action_dim();
  write_array(file.get(), "observations", H5T_NATIVE_FLOAT, H5T_IEEE_F32LE, {T, ds}, dataset.states().data());
  write_array(file.get(), "next_observations", H5T_NATIVE_FLOAT, H5T_IEEE_F32LE, {T, ds},
              dataset.next_states().data());
  write_array(file.get(), "actions", H5T_NATIVE_FLOAT, H5T_IEEE_F32LE, {T, da}, dataset.actions().data());
  write_array(file.get(), "rewards", H5T_NATIVE_FLOAT, H5T_IEEE_F32LE, {T}, dataset.rewards().data());
  write_array(file.get(), "terminals", H5T_NATIVE_UINT8, H5T_STD_U8LE, {T}, dataset.terminals().data());
  std::vector<std::uint8_t> timeouts(T, 0);
  write_array(file.get(), "timeouts", H5T_NATIVE_UINT8, H5T_STD_U8LE, {T}, timeouts.data());
}

void ChainMdpSpec::validate() const {
  if (n_states < 2) throw ParameterError("chain needs at least 2 states");
  if (n_transitions < n_states) throw ParameterError("n_transitions must be >= n_states");
  if (!(discount >= 0.0 && discount < 1.0)) throw ParameterError("discount must lie in [0, 1)");
  if (!(behavior_epsilon >= 0.0 && behavior_epsilon <= 1.0)) {
    throw ParameterError("behavior_epsilon must lie in [0, 1]");
  }
  if (!std::isfinite(goal_reward)) throw ParameterError("goal_reward must be finite");
}

std::vector<float> chain_one_hot(int state, int n_states) {
  std::vector<float> v(n_states, 0.0f);
  v.at(state) = 1.0f;
  return v;
}

int chain_next_state(int state, float action, int n_states) {
  int next = action >= 0.0f ? state + 1 : state - 1;
  return std::clamp(next, 0, n_states - 1);
}

TransitionDataset generate_chain_dataset(const ChainMdpSpec& spec) {
  spec.validate();
  TransitionDataset dataset("chain-" + std::to_string(spec.n_states), spec.n_states, 1);
  dataset.reserve(spec.n_transitions);

  // Explicit draws rather than std::*_distribution keep the stream identical
  // across standard library implementations.
  std::mt19937_64 rng(spec.seed);
  auto uniform01 = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };

  const int goal = spec.n_states - 1;
  int s = 0;
  for (int i = 0; i < spec.n_transitions; ++i) {
    float a = 1.0f;
    if (uniform01() < spec.behavior_epsilon) {
      a = static_cast<float>(2.0 * uniform01() - 1.0);
    }
    int next = chain_next_state(s, a, spec.n_states);
    bool done = next == goal;
    dataset.push_back(Transition{chain_one_hot(s, spec.n_states), {a},
                                 done ? static_cast<float>(spec.goal_reward) : 0.0f,
                                 chain_one_hot(next, spec.n_states), done});
    s = done ? 0 : next;
  }
  return dataset;
}

}  // namespace edtd7
