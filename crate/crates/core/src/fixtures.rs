//! The small request/approval log used throughout the docs and tests.
//!
//! Traces 1 to 3 are normal behaviour. Trace 4 is performed by User1 while
//! carrying the role `manager`, which breaks the UserID to UserRole mapping.

use crate::event_log::{parse_log, AttributeSchema, EventLog, ParseOptions};

pub const ATTRIBUTES: [&str; 5] = ["Type", "Activity", "UserID", "UserName", "UserRole"];

pub const TRACE_COLUMN: &str = "tID";

pub const NORMAL_ROWS: &str = "\
Time,ID,Type,Activity,UserID,UserName,UserRole,tID
0,0,User-Actions,Log in,001,User1,employee,1
1,1,User-Actions,Logged in,001,User1,employee,1
1,2,Request Permission,Create Request,001,User1,employee,1
2,3,Request Permission,Send Mail,001,User1,employee,1
3,4,User-Actions,Log in,001,User1,employee,2
4,5,User-Actions,Logged in,001,User1,employee,2
6,6,Request Permission,Create Request,001,User1,employee,2
7,7,Request Permission,Send Mail,001,User1,employee,2
8,8,Request Permission,Disapproved,002,User2,manager,2
9,9,User-Actions,Log in,003,User3,employee,3
10,10,User-Actions,Logged in,003,User3,employee,3
10,11,Request Permission,Create Request,003,User3,employee,3
11,12,Request Permission,Approved,002,User2,manager,1
12,13,Request Permission,Send Mail,003,User3,employee,3
17,14,Request Permission,Approved,004,User4,sales-manager,3
";

pub const ANOMALOUS_ROWS: &str = "\
18,12,User-Actions,Log in,001,User1,manager,4
19,13,User-Actions,Logged in,001,User1,manager,4
20,14,Request Permission,Create Request,001,User1,manager,4
21,15,Request Permission,Approved,001,User1,manager,4
21,16,Request Permission,Send Mail,001,User1,manager,4
";

pub fn schema() -> AttributeSchema {
    AttributeSchema::new(ATTRIBUTES, TRACE_COLUMN).expect("static schema is valid")
}

/// Traces 1 to 3 (15 events).
pub fn access_log_normal() -> EventLog {
    parse_log(NORMAL_ROWS.as_bytes(), &schema(), ParseOptions::default()).expect("fixture parses")
}

/// All four traces (20 events).
pub fn access_log_full() -> EventLog {
    let text = format!("{NORMAL_ROWS}{ANOMALOUS_ROWS}");
    parse_log(text.as_bytes(), &schema(), ParseOptions::default()).expect("fixture parses")
}
