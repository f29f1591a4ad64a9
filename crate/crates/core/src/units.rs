//! Multiplicative units over three base dimensions (length, time, intensity).
//!
//! Values are always stored in canonical units: micrometers, hours and
//! arbitrary intensity units. Display units only matter at the edges, when
//! a value is constructed from or rendered into a specific [`Unit`].

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Exponent vector over the base dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Dimension {
    pub length: i8,
    pub time: i8,
    pub intensity: i8,
}

impl Dimension {
    pub const DIMENSIONLESS: Dimension = Dimension::new(0, 0, 0);
    pub const LENGTH: Dimension = Dimension::new(1, 0, 0);
    pub const AREA: Dimension = Dimension::new(2, 0, 0);
    pub const TIME: Dimension = Dimension::new(0, 1, 0);
    pub const RATE: Dimension = Dimension::new(0, -1, 0);
    pub const AREA_RATE: Dimension = Dimension::new(2, -1, 0);
    pub const INTENSITY: Dimension = Dimension::new(0, 0, 1);

    pub const fn new(length: i8, time: i8, intensity: i8) -> Self {
        Dimension {
            length,
            time,
            intensity,
        }
    }

    pub fn is_dimensionless(self) -> bool {
        self == Self::DIMENSIONLESS
    }

    pub fn powi(self, n: i8) -> Self {
        Dimension::new(self.length * n, self.time * n, self.intensity * n)
    }
}

impl Add for Dimension {
    type Output = Dimension;

    fn add(self, rhs: Dimension) -> Dimension {
        Dimension::new(
            self.length + rhs.length,
            self.time + rhs.time,
            self.intensity + rhs.intensity,
        )
    }
}

impl Sub for Dimension {
    type Output = Dimension;

    fn sub(self, rhs: Dimension) -> Dimension {
        self + (-rhs)
    }
}

impl Neg for Dimension {
    type Output = Dimension;

    fn neg(self) -> Dimension {
        Dimension::new(-self.length, -self.time, -self.intensity)
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_dimensionless() {
            return f.write_str("1");
        }
        let mut parts = Vec::new();
        for (sym, exp) in [("L", self.length), ("T", self.time), ("I", self.intensity)] {
            match exp {
                0 => {}
                1 => parts.push(sym.to_string()),
                e => parts.push(format!("{sym}^{e}")),
            }
        }
        f.write_str(&parts.join("·"))
    }
}

/// Display units understood at the library boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unit {
    Micrometer,
    SquareMicrometer,
    Hour,
    Minute,
    PerHour,
    SquareMicrometerPerHour,
    ArbitraryUnit,
    Dimensionless,
}

impl Unit {
    pub fn dimension(self) -> Dimension {
        match self {
            Unit::Micrometer => Dimension::LENGTH,
            Unit::SquareMicrometer => Dimension::AREA,
            Unit::Hour | Unit::Minute => Dimension::TIME,
            Unit::PerHour => Dimension::RATE,
            Unit::SquareMicrometerPerHour => Dimension::AREA_RATE,
            Unit::ArbitraryUnit => Dimension::INTENSITY,
            Unit::Dimensionless => Dimension::DIMENSIONLESS,
        }
    }

    /// Size of one of this unit, expressed in canonical units.
    pub fn factor(self) -> f64 {
        match self {
            Unit::Minute => 1.0 / 60.0,
            _ => 1.0,
        }
    }

    /// Unit used to display values of `dimension`, if one is defined.
    pub fn for_dimension(dimension: Dimension) -> Option<Unit> {
        [
            Unit::Micrometer,
            Unit::SquareMicrometer,
            Unit::Hour,
            Unit::PerHour,
            Unit::SquareMicrometerPerHour,
            Unit::ArbitraryUnit,
            Unit::Dimensionless,
        ]
        .into_iter()
        .find(|u| u.dimension() == dimension)
    }

    /// Inverse of [`Unit::token`].
    pub fn from_token(token: &str) -> Option<Unit> {
        [
            Unit::Micrometer,
            Unit::SquareMicrometer,
            Unit::Hour,
            Unit::Minute,
            Unit::PerHour,
            Unit::SquareMicrometerPerHour,
            Unit::ArbitraryUnit,
            Unit::Dimensionless,
        ]
        .into_iter()
        .find(|u| u.token() == token)
    }

    /// Token used in file headers and plot axis labels.
    pub fn token(self) -> &'static str {
        match self {
            Unit::Micrometer => "um",
            Unit::SquareMicrometer => "um2",
            Unit::Hour => "h",
            Unit::Minute => "min",
            Unit::PerHour => "1/h",
            Unit::SquareMicrometerPerHour => "um2/h",
            Unit::ArbitraryUnit => "au",
            Unit::Dimensionless => "1",
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// A real value tagged with its physical dimension, stored in canonical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity {
    value: f64,
    dimension: Dimension,
}

impl Quantity {
    pub fn new(value: f64, unit: Unit) -> Self {
        Quantity {
            value: value * unit.factor(),
            dimension: unit.dimension(),
        }
    }

    pub fn from_canonical(value: f64, dimension: Dimension) -> Self {
        Quantity { value, dimension }
    }

    pub fn zero(dimension: Dimension) -> Self {
        Quantity::from_canonical(0.0, dimension)
    }

    pub fn um(v: f64) -> Self {
        Quantity::new(v, Unit::Micrometer)
    }

    pub fn um2(v: f64) -> Self {
        Quantity::new(v, Unit::SquareMicrometer)
    }

    pub fn hours(v: f64) -> Self {
        Quantity::new(v, Unit::Hour)
    }

    pub fn minutes(v: f64) -> Self {
        Quantity::new(v, Unit::Minute)
    }

    pub fn per_hour(v: f64) -> Self {
        Quantity::new(v, Unit::PerHour)
    }

    pub fn au(v: f64) -> Self {
        Quantity::new(v, Unit::ArbitraryUnit)
    }

    pub fn dimensionless(v: f64) -> Self {
        Quantity::new(v, Unit::Dimensionless)
    }

    /// Value in canonical units (um, h, au).
    pub fn canonical(&self) -> f64 {
        self.value
    }

    pub fn dimension(&self) -> Dimension {
        self.dimension
    }

    /// Value expressed in `unit`; fails if the dimensions disagree.
    pub fn value_in(&self, unit: Unit) -> Result<f64> {
        self.expect_dimension(unit.dimension())?;
        Ok(self.value / unit.factor())
    }

    pub fn expect_dimension(&self, dimension: Dimension) -> Result<()> {
        if self.dimension == dimension {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                left: self.dimension,
                right: dimension,
            })
        }
    }

    pub fn try_add(self, rhs: Quantity) -> Result<Quantity> {
        rhs.expect_dimension(self.dimension)?;
        Ok(Quantity::from_canonical(self.value + rhs.value, self.dimension))
    }

    pub fn try_sub(self, rhs: Quantity) -> Result<Quantity> {
        rhs.expect_dimension(self.dimension)?;
        Ok(Quantity::from_canonical(self.value - rhs.value, self.dimension))
    }

    pub fn try_div(self, rhs: Quantity) -> Result<Quantity> {
        if rhs.value == 0.0 {
            return Err(Error::DivisionByZero);
        }
        Ok(Quantity::from_canonical(
            self.value / rhs.value,
            self.dimension - rhs.dimension,
        ))
    }

    /// Ordering that refuses to compare across dimensions.
    pub fn try_cmp(&self, rhs: &Quantity) -> Result<Ordering> {
        rhs.expect_dimension(self.dimension)?;
        self.value
            .partial_cmp(&rhs.value)
            .ok_or_else(|| Error::InvalidInput("NaN quantity in comparison".into()))
    }

    pub fn powi(self, n: i8) -> Quantity {
        Quantity::from_canonical(self.value.powi(i32::from(n)), self.dimension.powi(n))
    }

    pub fn scale(self, factor: f64) -> Quantity {
        Quantity::from_canonical(self.value * factor, self.dimension)
    }
}

impl Mul for Quantity {
    type Output = Quantity;

    fn mul(self, rhs: Quantity) -> Quantity {
        Quantity::from_canonical(self.value * rhs.value, self.dimension + rhs.dimension)
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]", self.value, self.dimension)
    }
}

/// Convert a pixel measurement (`px^power`) to physical units using a
/// length-dimensioned pixel size.
pub fn px_to_physical(value: f64, power: i8, pixel_size: Quantity) -> Result<Quantity> {
    pixel_size.expect_dimension(Dimension::LENGTH)?;
    if !(pixel_size.canonical() > 0.0) || !pixel_size.canonical().is_finite() {
        return Err(Error::InvalidMetadata(format!(
            "pixel size must be positive, got {}",
            pixel_size.canonical()
        )));
    }
    Ok(Quantity::dimensionless(value) * pixel_size.powi(power))
}

/// Named time series with a single value dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantitySeries {
    name: String,
    times_h: Vec<f64>,
    values: Vec<f64>,
    dimension: Dimension,
}

impl QuantitySeries {
    pub fn new(
        name: impl Into<String>,
        times: &[Quantity],
        values: &[Quantity],
        dimension: Dimension,
    ) -> Result<Self> {
        let times_h = times
            .iter()
            .map(|t| t.value_in(Unit::Hour))
            .collect::<Result<Vec<_>>>()?;
        let values = values
            .iter()
            .map(|v| v.expect_dimension(dimension).map(|_| v.canonical()))
            .collect::<Result<Vec<_>>>()?;
        Self::from_canonical(name, times_h, values, dimension)
    }

    /// Build from raw canonical values (hours and canonical value units).
    pub fn from_canonical(
        name: impl Into<String>,
        times_h: Vec<f64>,
        values: Vec<f64>,
        dimension: Dimension,
    ) -> Result<Self> {
        if times_h.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "series has {} times but {} values",
                times_h.len(),
                values.len()
            )));
        }
        if times_h.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput(
                "series times must be strictly increasing".into(),
            ));
        }
        Ok(QuantitySeries {
            name: name.into(),
            times_h,
            values,
            dimension,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dimension(&self) -> Dimension {
        self.dimension
    }

    pub fn times_h(&self) -> &[f64] {
        &self.times_h
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time(&self, i: usize) -> Quantity {
        Quantity::hours(self.times_h[i])
    }

    pub fn value(&self, i: usize) -> Quantity {
        Quantity::from_canonical(self.values[i], self.dimension)
    }
}
