//! Parse, evaluate, simplify and compare expressions.

use carfollow_sr::expr::{equivalent, evaluate, simplify, EquivalenceDomain};
use carfollow_sr::search::krauss_pool;
use carfollow_sr::traffic::{generate_dataset, target_expression, CarFollowingModel, GenerateConfig};
use carfollow_sr::expr::ExpressionTree;

fn main() -> carfollow_sr::Result<()> {
    let data = generate_dataset(&GenerateConfig { n_pairs: 50, ..Default::default() })?;
    let pool = krauss_pool(true, (10, 40));
    let target = target_expression(CarFollowingModel::Krauss);
    println!("target     {}  (complexity {})", target.infix(), target.complexity());

    let messy = ExpressionTree::parse_prefix("min + a_max v_f + v_l / * ds + b b + + v_l v_f + b b", Some(&pool))?;
    println!("messy      {}", messy.infix());
    println!("simplified {}", simplify(&messy).infix());

    let domain = EquivalenceDomain::from_dataset(&data, 200, 0);
    println!("equivalent to target: {}", equivalent(&messy, &target, 1e-6, Some(&domain)));

    let pred = evaluate(&target, &data).expect("target evaluates");
    for i in 0..3 {
        println!("row {i}: predicted {:.4}, observed {:.4}", pred[i], data.target()[i]);
    }
    Ok(())
}
