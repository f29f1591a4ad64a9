//! Dimension-checked quantities and pixel conversions.

use cellflow::units::{px_to_physical, Quantity, Unit};

fn main() -> cellflow::Result<()> {
    let pixel = Quantity::um(0.065);
    let area = px_to_physical(412.0, 2, pixel)?;
    let length = px_to_physical(31.0, 1, pixel)?;
    println!(
        "412 px = {:.4} um2, 31 px = {:.4} um",
        area.value_in(Unit::SquareMicrometer)?,
        length.value_in(Unit::Micrometer)?
    );

    let interval = Quantity::minutes(15.0);
    println!("frame interval {} h", interval.value_in(Unit::Hour)?);

    let grown = area.try_add(Quantity::um2(0.4))?;
    let rate = grown.try_sub(area)?.try_div(interval)?;
    println!("area rate {:.3} um2/h ({rate})", rate.value_in(Unit::SquareMicrometerPerHour)?);

    match area.try_add(length) {
        Ok(q) => println!("unexpected sum {q}"),
        Err(e) => println!("rejected: {e}"),
    }
    Ok(())
}
