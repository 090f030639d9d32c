use occgame::gated::MaskImage;
use occgame::net::{
    build_generator, build_patch_discriminator, generator_forward, receptive_field_probe, ConvVariant, LayerSpec,
};
use occgame::rng::substream;

use crate::common::rand_tensor;

pub fn run() {
    let mut regular_params = None;
    for variant in ConvVariant::ALL {
        let (spec, state) = build_generator(variant, 5).unwrap();
        assert_eq!(spec.input_channels, 4, "generator takes image plus mask");
        assert_eq!(spec.input_size, 128);
        assert_eq!(spec.validate().unwrap(), [3, 128, 128]);
        assert_eq!(spec.max_channels(), 256);
        for layer in &spec.layers {
            match layer {
                LayerSpec::Conv(c) => assert!(c.stride >= 1 && c.kernel >= 1),
                LayerSpec::Upsample(f) => assert_eq!(*f, 2),
            }
        }
        let mut rng = substream(5, "c3-input", 0);
        let image = rand_tensor(&mut rng, &[1, 3, 128, 128], -1.0, 1.0);
        let mask = MaskImage::from_fn(128, 128, |y, x| !(40..90).contains(&y) || !(30..100).contains(&x));
        let out = generator_forward(&spec, &state, &image, &mask).unwrap();
        assert_eq!(out.shape(), [1, 3, 128, 128]);
        assert!(
            out.data().iter().all(|v| v.abs() < 1.0),
            "{variant:?} output leaves (-1, 1)"
        );
        match variant {
            ConvVariant::Regular => regular_params = Some(spec.substitutable_param_count()),
            ConvVariant::Gated => assert_eq!(spec.substitutable_param_count(), 2 * regular_params.unwrap()),
            ConvVariant::Partial => {}
        }
    }

    let (patch, state) = build_patch_discriminator(9).unwrap();
    assert_eq!(patch.max_channels(), 256);
    let [_, h, w] = patch.validate().unwrap();
    let rf = receptive_field_probe(&patch, &state, (0, h / 2, w / 2)).unwrap();
    assert_eq!(rf, (50, 50), "patch critic receptive field");
}
