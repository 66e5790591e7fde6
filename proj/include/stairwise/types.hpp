#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace stairwise {

// Row index runs along the frame's x axis, column index along y.
template <typename Scalar>
using GridT = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Grid = GridT<double>;
using GridF = GridT<float>;
using Mask = GridT<bool>;

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

// Robot-centric local grid geometry: 1.4 m x 1.0 m at 0.05 m.
inline constexpr int kGridRows = 28;
inline constexpr int kGridCols = 20;
inline constexpr double kGridResolution = 0.05;

// ---------------------------------------------------------------------------
// Errors

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class OutOfExtentError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncationError : public FormatError {
 public:
  TruncationError(const std::string& what, std::size_t record)
      : FormatError(what), record_(record) {}
  std::size_t record() const noexcept { return record_; }

 private:
  std::size_t record_;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ShapeError : public FormatError {
 public:
  using FormatError::FormatError;
};

// ---------------------------------------------------------------------------
// Pose in the odometry frame.

struct Pose {
  Vec3 position = Vec3::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();

  static Pose from_yaw(const Vec3& position, double yaw) {
    return {position, Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Vec3::UnitZ()))};
  }

  /// Throws ValidationError unless the quaternion is unit within 1e-9.
  void validate() const {
    if (std::abs(orientation.norm() - 1.0) > 1e-9) {
      throw ValidationError("pose orientation is not a unit quaternion");
    }
  }

  double yaw() const {
    const auto& q = orientation;
    return std::atan2(2.0 * (q.w() * q.z() + q.x() * q.y()),
                      1.0 - 2.0 * (q.y() * q.y() + q.z() * q.z()));
  }

  Vec3 to_world(const Vec3& local) const { return orientation * local + position; }
  Vec3 to_local(const Vec3& world) const {
    return orientation.conjugate() * (world - position);
  }

  /// Gravity-aligned frame sharing this pose's position and heading.
  Pose level() const { return from_yaw(position, yaw()); }
};

inline Eigen::Matrix2d planar_rotation(double yaw) {
  return Eigen::Rotation2Dd(yaw).toRotationMatrix();
}

}  // namespace stairwise
