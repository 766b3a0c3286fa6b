use docmask::eval::{match_boxes, Word};
use docmask::ocr::{OcrEngine, OcrWord};
use docmask::synth::{compose_document, DocNoiseProbs, FontLibrary, FontNoiseProbs, SynthConfig, TextSampler};

fn clean(size: u32) -> SynthConfig {
    SynthConfig {
        background_probs: [1.0, 0.0, 0.0],
        font_size_range: [size, size],
        font_noise_probs: FontNoiseProbs { speckle: 0.0, binarize: 0.0, distort: 0.0 },
        rotation_range: 0.0,
        doc_noise_probs: DocNoiseProbs { blur: 0.0, compress: 0.0, downsample: 0.0 },
        hard_negative_prob: 0.0,
        tiles_per_doc_range: [2, 4],
        doc_size: 384,
        ..SynthConfig::default()
    }
}

#[test]
fn closed_loop_fidelity() {
    let engine = OcrEngine::reference_default().unwrap();
    let fonts = FontLibrary::bundled();
    let corpus = TextSampler::default();
    let (mut exact, mut total) = (0, 0);
    for size in [16, 24, 32] {
        for seed in 0..12u64 {
            let doc = compose_document(&clean(size), &fonts, &corpus, seed * 31 + size as u64).unwrap();
            let pred: Vec<OcrWord> = engine.recognize(&doc.image).unwrap();
            let m = match_boxes(
                &pred.iter().map(|w| w.rect()).collect::<Vec<_>>(),
                &doc.words.iter().map(|w| w.rect()).collect::<Vec<_>>(),
                0.5,
            );
            total += doc.words.len();
            for p in &m.pairs {
                if pred[p.pred].text == doc.words[p.gt].text {
                    exact += 1;
                } else {
                    eprintln!("size {size}: {:?} read as {:?}", doc.words[p.gt].text, pred[p.pred].text);
                }
            }
            for &g in &m.unmatched_gt {
                eprintln!("size {size}: missed {:?}", doc.words[g].text);
            }
        }
    }
    let rate = exact as f64 / total as f64;
    eprintln!("closed-loop exact {exact}/{total} = {rate:.3}");
    assert!(rate >= 0.95, "exact-match rate {rate:.3}");
}

/// Hard-negative tiles dropped onto blank spots of a clean page.
fn clutter(page: &docmask::raster::Raster, gt: &docmask::raster::BinaryMap, seed: u64) -> docmask::raster::Raster {
    use docmask::raster::Rect;
    use rand::{Rng, SeedableRng};
    let fonts = FontLibrary::bundled();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = page.clone();
    let mut placed = 0;
    for _ in 0..400 {
        if placed == 6 {
            break;
        }
        let face = &fonts.common[rng.gen_range(0..fonts.common.len())];
        let tile = docmask::synth::render_hard_negative_tile(face.as_ref(), rng.gen_range(16..=32), rng.gen()).unwrap();
        let (w, h) = (tile.width() as i32, tile.height() as i32);
        let x = rng.gen_range(0..page.width() as i32 - w);
        let y = rng.gen_range(0..page.height() as i32 - h);
        let zone = Rect::new(x - 10, y - 10, x + w + 10, y + h + 10).unwrap().clip(page.width(), page.height()).unwrap();
        let busy = (zone.y0()..zone.y1())
            .any(|yy| (zone.x0()..zone.x1()).any(|xx| gt.get(xx as usize, yy as usize) || out.get(xx as usize, yy as usize) < 200));
        if !busy {
            out.blit_min(&tile, x, y);
            placed += 1;
        }
    }
    out
}

#[test]
fn clutter_hurts_and_gt_masking_restores() {
    use docmask::eval::{evaluate_document, EvalOptions};
    use docmask::mask::{apply_mask, MaskConfig};
    use docmask::raster::dilate;
    let engine = OcrEngine::reference_default().unwrap();
    let fonts = FontLibrary::bundled();
    let corpus = TextSampler::default();
    let opts = EvalOptions::default();
    let mcfg = MaskConfig::default();
    let mut strictly_worse = 0;
    for seed in 0..8u64 {
        let doc = compose_document(&clean(24), &fonts, &corpus, 500 + seed).unwrap();
        let es = |img| evaluate_document("d", &engine.recognize(img).unwrap(), &doc.words, &opts).edit_score;
        let base = es(&doc.image);
        let noisy = clutter(&doc.image, &doc.gt, seed);
        let hurt = es(&noisy);
        assert!(hurt <= base, "seed {seed}: clutter raised ES {base} -> {hurt}");
        if hurt < base {
            strictly_worse += 1;
        }
        let mask = dilate(&doc.gt, mcfg.dilation_radius);
        let restored = es(&apply_mask(&noisy, &mask, &mcfg).unwrap());
        assert_eq!(restored, base, "seed {seed}");
    }
    assert!(strictly_worse > 0);
}

#[test]
fn hard_negative_page_masked_with_its_gt_reads_nothing() {
    use docmask::mask::{apply_mask, MaskConfig};
    let engine = OcrEngine::reference_default().unwrap();
    let cfg = SynthConfig { hard_negative_prob: 1.0, ..clean(24) };
    let doc = compose_document(&cfg, &FontLibrary::bundled(), &TextSampler::default(), 3).unwrap();
    assert!(doc.words.is_empty());
    let unmasked = engine.recognize(&doc.image).unwrap();
    assert!(unmasked.iter().all(|w| w.confidence >= 0.4));
    let masked = apply_mask(&doc.image, &doc.gt, &MaskConfig::default()).unwrap();
    assert!(engine.recognize(&masked).unwrap().is_empty());
}

#[test]
fn recognition_is_deterministic() {
    let engine = OcrEngine::reference_default().unwrap();
    let doc = compose_document(&SynthConfig::desk(), &FontLibrary::bundled(), &TextSampler::default(), 9).unwrap();
    assert_eq!(engine.recognize(&doc.image).unwrap(), engine.recognize(&doc.image).unwrap());
}
