use std::fmt::Display;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Input,
    Backend,
    Output,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Config => "config",
            Category::Input => "input",
            Category::Backend => "backend",
            Category::Output => "output",
        }
    }

    pub fn exit_code(self) -> u8 {
        match self {
            Category::Config => 2,
            Category::Input => 3,
            Category::Backend => 4,
            Category::Output => 5,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub category: Category,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(category: Category, error: impl Into<anyhow::Error>) -> Self {
        Self {
            category,
            error: error.into(),
        }
    }

    pub fn msg(category: Category, message: impl Display) -> Self {
        Self::new(category, anyhow::anyhow!("{message}"))
    }
}

pub trait Categorize<T> {
    fn cat(self, category: Category) -> Result<T, Failure>;
    fn cat_ctx(self, category: Category, context: impl Display) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Categorize<T> for Result<T, E> {
    fn cat(self, category: Category) -> Result<T, Failure> {
        self.map_err(|e| Failure::new(category, e))
    }

    fn cat_ctx(self, category: Category, context: impl Display) -> Result<T, Failure> {
        self.map_err(|e| Failure::new(category, e.into().context(context.to_string())))
    }
}
