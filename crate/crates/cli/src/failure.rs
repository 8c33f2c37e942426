use eselect::Error;

pub type Outcome<T> = Result<T, Failure>;

/// Message plus process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub const INPUT: u8 = 2;
    pub const NUMERICAL: u8 = 3;

    pub fn input(message: String) -> Self {
        Self {
            code: Self::INPUT,
            message,
        }
    }

    pub fn output(message: String) -> Self {
        Self { code: 1, message }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_numerical() {
            Self::NUMERICAL
        } else {
            match e {
                Error::Io(_) => 1,
                _ => Self::INPUT,
            }
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}
