use freqlens::datasets::{synthesize, SyntheticSpec};
use freqlens::model::{Network, TrainConfig};

fn main() {
    let t0 = std::time::Instant::now();
    let data = synthesize(&SyntheticSpec::default());
    let (c, h, w) = data.images()[0].dims();
    let mut net = Network::new(c, h, w, data.num_classes(), 7).unwrap();
    net.train(&data, &TrainConfig::default()).unwrap();
    let acc = net.evaluate(&data).unwrap();
    println!("train accuracy {acc:.4} in {:.1?}", t0.elapsed());
}
