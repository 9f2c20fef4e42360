use approx::assert_relative_eq;
use proptest::prelude::*;
use shapenergy_core::dataset::{generate, sample_params, split, DatasetConfig};
use shapenergy_core::energy::{annual_energy, BuildingConfig};
use shapenergy_core::geometry::{build_footprint, GeometryConfig, ShapeParams, OFFSET_LIMIT};
use shapenergy_core::nn::{build_cnn, build_dnn, CnnConfig, ModelState};
use shapenergy_core::raster::{rasterize, RasterSpec};
use shapenergy_core::train::kfold_assign;
use shapenergy_core::weather::{synthesize_weather, SiteSpec, SyntheticWeatherConfig};

fn params() -> impl Strategy<Value = ShapeParams> {
    proptest::array::uniform4(-OFFSET_LIMIT..=OFFSET_LIMIT).prop_map(|x| ShapeParams::from_array(x).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn footprints_are_simple_rectilinear_ccw_and_area_preserving(p in params()) {
        let f = build_footprint(&p, &GeometryConfig::default());
        prop_assert!(f.is_simple());
        prop_assert!(f.is_rectilinear());
        prop_assert!(f.is_ccw());
        prop_assert!((f.area() - 990.0).abs() < 1e-6);
    }

    #[test]
    fn raster_area_within_quantization_bound(p in params()) {
        let g = GeometryConfig::default();
        let spec = RasterSpec::for_geometry(&g);
        let f = build_footprint(&p, &g);
        let img = rasterize(&f, &spec).unwrap();
        let side = spec.pixel_width().max(spec.pixel_height());
        let err = (img.interior_count() as f64 * spec.pixel_area() - f.area()).abs();
        prop_assert!(err <= 0.75 * f.perimeter() * side);
    }

    #[test]
    fn mirrored_shape_rasterizes_to_flipped_image(p in params()) {
        let g = GeometryConfig::default();
        let spec = RasterSpec::for_geometry(&g);
        let a = rasterize(&build_footprint(&p, &g), &spec).unwrap();
        let b = rasterize(&build_footprint(&p.mirror_ew(), &g), &spec).unwrap();
        prop_assert_eq!(a.flip_horizontal(), b);
    }

    #[test]
    fn mirror_reflects_footprint_about_the_north_south_axis(p in params()) {
        let m = p.mirror_ew();
        prop_assert_eq!(m.mirror_ew(), p);
        let reflected = build_footprint(&m, &GeometryConfig::default());
        let l = GeometryConfig::default().length();
        for v in build_footprint(&p, &GeometryConfig::default()).vertices() {
            prop_assert!(reflected.vertices().iter().any(|w| (w.x - (l - v.x)).abs() < 1e-9 && (w.y - v.y).abs() < 1e-9));
        }
    }
}

/// Sun-symmetric year and schedule: no diurnal temperature swing, occupancy centred on noon.
fn symmetric_setup() -> (shapenergy_core::WeatherSeries, BuildingConfig) {
    let weather = synthesize_weather(
        &SyntheticWeatherConfig { diurnal_amplitude: 0.0, ..Default::default() },
        &SiteSpec::default(),
    )
    .unwrap();
    let building = BuildingConfig { occupied_start_hour: 7, occupied_end_hour: 17, ..Default::default() };
    (weather, building)
}

#[test]
fn energy_is_mirror_symmetric_under_symmetric_sun() {
    let (weather, building) = symmetric_setup();
    let g = GeometryConfig::default();
    for p in sample_params(20, 77) {
        let a = annual_energy(&build_footprint(&p, &g), &weather, &building).unwrap();
        let b = annual_energy(&build_footprint(&p.mirror_ew(), &g), &weather, &building).unwrap();
        assert_relative_eq!(a.total_kwh, b.total_kwh, max_relative = 1e-9);
        assert_relative_eq!(a.heating_kwh, b.heating_kwh, max_relative = 1e-9, epsilon = 1e-9);
        assert_relative_eq!(a.cooling_kwh, b.cooling_kwh, max_relative = 1e-9, epsilon = 1e-9);
        assert_relative_eq!(a.lighting_kwh, b.lighting_kwh, max_relative = 1e-9, epsilon = 1e-9);
    }
}

#[test]
fn param_vector_length_matches_count() {
    for n in 2..=64 {
        let spec = build_dnn(n).unwrap();
        let state = ModelState::init(&spec, 3).unwrap();
        assert_eq!(state.params().len(), spec.param_count());
        assert_eq!(spec.param_count(), 6 * n - 5);
    }
    for n in [1, 2, 4, 8, 16, 32] {
        let cfg = CnnConfig::new(n);
        let spec = build_cnn(&cfg).unwrap();
        assert_eq!(ModelState::init(&spec, 3).unwrap().params().len(), cfg.param_count());
    }
}

#[test]
fn split_and_fold_sizes() {
    let (train, test) = split(1050, 0.8, 5);
    assert_eq!((train.len(), test.len()), (840, 210));
    let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..1050).collect::<Vec<_>>());

    let folds = kfold_assign(&train, 5, 5).unwrap();
    assert!(folds.iter().all(|f| f.len() == 168));
    let mut seen: Vec<usize> = folds.concat();
    seen.sort_unstable();
    assert_eq!(seen, train);
}

#[test]
fn generation_is_deterministic() {
    let weather = synthesize_weather(&SyntheticWeatherConfig::default(), &SiteSpec::default()).unwrap();
    let cfg = DatasetConfig::new(12, 21);
    let a = generate(&cfg, &weather).unwrap();
    let b = generate(&cfg, &weather).unwrap();
    assert_eq!(a.samples, b.samples);
    assert_eq!((a.train_ids.clone(), a.test_ids.clone()), (b.train_ids, b.test_ids));
    assert_ne!(generate(&DatasetConfig::new(12, 22), &weather).unwrap().samples, a.samples);
}
