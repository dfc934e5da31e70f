#include <benchmark/benchmark.h>

#include <cstdint>
#include <numeric>

#include "boxprior/geometry.hpp"
#include "boxprior/numerics/random.hpp"

namespace geo = boxprior::geometry;

namespace {

geo::PointCloud random_cloud(std::size_t n) {
  boxprior::numerics::Rng rng(1);
  geo::PointCloud cloud;
  cloud.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    cloud.points.push_back({rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-3, 3), rng.uniform()});
  }
  return cloud;
}

// LiDAR x forward, z up -> camera z forward, y down.
geo::RigidTransform lidar_to_camera() {
  return geo::RigidTransform::from_rotation_translation({0, -1, 0, 0, 0, -1, 1, 0, 0},
                                                        {0.0, 0.3, -1.0});
}

void BM_ProjectAndRasterize(benchmark::State& state) {
  const auto cloud = random_cloud(static_cast<std::size_t>(state.range(0)));
  const auto k = geo::IntrinsicMatrix::pinhole(1266.0, 1266.0, 800.0, 450.0);
  const auto t = lidar_to_camera();
  const geo::ImagePlane plane{1600, 900};
  for (auto _ : state) {
    const auto projected = geo::project_points(cloud, k, t, plane);
    std::int64_t checksum = 0;
    for (const auto& p : projected) {
      const auto px = geo::rasterize(p);
      checksum += px.u + px.v;
    }
    benchmark::DoNotOptimize(checksum);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ProjectAndRasterize)->Arg(1'000'000)->Unit(benchmark::kMillisecond);

void BM_BoxMembership(benchmark::State& state) {
  const auto cloud = random_cloud(1'000'000);
  const auto projected = geo::project_points(cloud, geo::IntrinsicMatrix::pinhole(1266.0, 1266.0, 800.0, 450.0),
                                             lidar_to_camera(), {1600, 900});
  const geo::BoundingBox2D box{400.0, 200.0, 1200.0, 700.0, 1};
  for (auto _ : state) benchmark::DoNotOptimize(geo::points_in_box2d(projected, box));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(projected.size()));
}
BENCHMARK(BM_BoxMembership)->Unit(benchmark::kMillisecond);

}  // namespace
