/// Forward pass of a 6-16-3 tanh network written as explicit matrices.
///
/// `weights` holds `W1` (16 x 6, row-major), `b1` (16), `W2` (3 x 16,
/// row-major), `b2` (3). Inputs are standardized with `mean` and `std`;
/// a zero `std` maps the input to 0.
pub fn forward(weights: &[f64], mean: &[f64], std: &[f64], input: &[f64]) -> [f64; 3] {
    assert_eq!(weights.len(), 163);
    let x: Vec<f64> = (0..6)
        .map(|i| if std[i] == 0.0 { 0.0 } else { (input[i] - mean[i]) / std[i] })
        .collect();
    let w1 = |r: usize, c: usize| weights[r * 6 + c];
    let b1 = |r: usize| weights[96 + r];
    let w2 = |r: usize, c: usize| weights[112 + r * 16 + c];
    let b2 = |r: usize| weights[160 + r];

    let mut hidden = [0.0; 16];
    for (r, h) in hidden.iter_mut().enumerate() {
        let mut acc = b1(r);
        for (c, xc) in x.iter().enumerate() {
            acc += w1(r, c) * xc;
        }
        *h = acc.tanh();
    }
    let mut out = [0.0; 3];
    for (r, o) in out.iter_mut().enumerate() {
        let mut acc = b2(r);
        for (c, h) in hidden.iter().enumerate() {
            acc += w2(r, c) * h;
        }
        *o = acc;
    }
    out
}
