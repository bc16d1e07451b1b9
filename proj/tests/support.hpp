#pragma once

#include "sgm/dataset.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace support {

/// Scratch directory removed on destruction.
class TempDir
{
public:
  TempDir()
  {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("sgm-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir()
  {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(TempDir const &) = delete;
  TempDir &operator=(TempDir const &) = delete;

  std::filesystem::path const &path() const { return path_; }
  std::filesystem::path operator/(std::string const &s) const { return path_ / s; }

private:
  std::filesystem::path path_;
};

inline std::vector<sgm::DatasetRecord> records(int n, int64_t size = 16, int64_t coils = 2, int accel = 2,
                                               uint64_t seed = 7, bool with_pgi = false)
{
  std::vector<sgm::DatasetRecord> out;
  for (int i = 0; i < n; ++i) {
    auto const s = seed * 1000 + static_cast<uint64_t>(i);
    auto const spec = sgm::PhantomSpec::for_family(sgm::PhantomFamily::A, size, size, s);
    sgm::AcquisitionConfig acq;
    acq.coils = coils;
    acq.acceleration = accel;
    acq.center_fraction = 0.125;
    acq.seed = 2 * s;
    auto r = sgm::generate_record("r-" + std::to_string(i), spec, acq);
    if (with_pgi) {
      auto const b = sgm::make_batch(std::span<sgm::DatasetRecord const>(&r, 1));
      r.pgi = b.zero_filled()[0].clone();
    }
    out.push_back(std::move(r));
  }
  return out;
}

} // namespace support
