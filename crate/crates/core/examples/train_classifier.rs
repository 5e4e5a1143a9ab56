//! Short stage-interchange run on the first MNIST samples: all-CNN against
//! the fully swapped model. Needs the dataset under $WCC_DATA_DIR or ./data.

use wcc_core::harness::data::{data_root, DatasetName};
use wcc_core::harness::experiments::{run_interchange, InterchangeConfig};
use wcc_core::harness::train::LrSchedule;

fn main() -> wcc_core::Result<()> {
    let mut cfg = InterchangeConfig::new(DatasetName::Mnist);
    cfg.depths = vec![0, 5];
    cfg.train_limit = Some(2000);
    cfg.test_limit = Some(500);
    cfg.train.epochs = 3;
    cfg.train.schedule = LrSchedule::Step {
        from_epoch: 3,
        factor: 0.1,
    };
    let report = run_interchange(&cfg, &data_root(), |r| {
        println!("depth {} done: test accuracy {:.3}", r.depth, r.test_acc());
    })?;
    print!("{}", report.to_csv());
    Ok(())
}
