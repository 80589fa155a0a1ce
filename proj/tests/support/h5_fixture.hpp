#pragma once

// Writes ad-hoc HDF5 files with arbitrary keys/shapes for loader tests.

#include <hdf5.h>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace edtd7::testing {

class H5Fixture {
 public:
  explicit H5Fixture(const std::filesystem::path& path)
      : file_(H5Fcreate(path.c_str(), H5F_ACC_TRUNC, H5P_DEFAULT, H5P_DEFAULT)) {
    if (file_ < 0) throw std::runtime_error("cannot create fixture " + path.string());
  }
  ~H5Fixture() { H5Fclose(file_); }
  H5Fixture(const H5Fixture&) = delete;
  H5Fixture& operator=(const H5Fixture&) = delete;

  void floats(const std::string& key, std::vector<hsize_t> dims, const std::vector<float>& values) {
    write(key, H5T_NATIVE_FLOAT, H5T_IEEE_F32LE, dims, values.data());
  }
  void bytes(const std::string& key, const std::vector<std::uint8_t>& values) {
    write(key, H5T_NATIVE_UINT8, H5T_STD_U8LE, {values.size()}, values.data());
  }
  /// Boolean array in h5py's layout: an int8 enum with FALSE = 0, TRUE = 1.
  void bools(const std::string& key, const std::vector<std::uint8_t>& values) {
    hid_t type = H5Tenum_create(H5T_NATIVE_INT8);
    std::int8_t f = 0, t = 1;
    H5Tenum_insert(type, "FALSE", &f);
    H5Tenum_insert(type, "TRUE", &t);
    write(key, type, type, {values.size()}, values.data());
    H5Tclose(type);
  }

 private:
  void write(const std::string& key, hid_t mem, hid_t file_type, std::vector<hsize_t> dims, const void* data) {
    hid_t space = H5Screate_simple(static_cast<int>(dims.size()), dims.data(), nullptr);
    hid_t dset = H5Dcreate2(file_, key.c_str(), file_type, space, H5P_DEFAULT, H5P_DEFAULT, H5P_DEFAULT);
    H5Dwrite(dset, mem, H5S_ALL, H5S_ALL, H5P_DEFAULT, data);
    H5Dclose(dset);
    H5Sclose(space);
  }

  hid_t file_;
};

}  // namespace edtd7::testing
